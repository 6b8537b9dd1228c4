"""Cold-boot model recovery simulator."""

from ._core import *  # noqa: F401,F403
from ._core import ColdcarveError, __doc__  # noqa: F401
