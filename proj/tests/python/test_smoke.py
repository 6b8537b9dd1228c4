import json
import os

import numpy as np
import pytest

import coldcarve as cc

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def victim(name="lenet5", seed=3):
    net = cc.Network(cc.zoo_model(name))
    net.initialize(seed)
    p = net.parameters
    p[p == 0] = 0.05  # zero biases read as text to the weight scanner
    net.parameters = p
    return net


def test_zoo_and_xml_round_trip():
    assert "lenet5" in cc.zoo_names()
    m = cc.zoo_model("lenet5")
    assert cc.parse_xml(cc.serialize_xml(m)) == m
    assert cc.total_params(m) == 2963
    with pytest.raises(cc.ColdcarveError) as err:
        cc.zoo_model("nope")
    assert err.value.code == "Config"


def test_forward_is_a_distribution():
    net = victim("mlp_blobs")
    out = net.forward(np.zeros((2, 4), dtype=np.float32))
    assert out.shape == (2, 3)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)


def test_zero_decay_recovery_is_exact():
    net = victim()
    xml = cc.serialize_xml(net.spec)
    blob = net.serialize_weights()
    dump = cc.synthesize_dump(xml, blob, cc.Filler.MIXED, len(xml) + len(blob) + 8192, 1)
    decayed = cc.apply_decay(dump, 0.0, 0.0, 2)
    r = cc.recover_model(decayed.data)
    assert cc.same_architecture(r.model, net.spec)
    assert np.array_equal(r.network.parameters, net.parameters)
    assert "xml_offset" in r.report


def test_decay_and_vote():
    img = cc.MemoryImage(bytes([0xFF]) * (1 << 16))
    ber = cc.bit_error_rate(img, cc.apply_decay(img, 0.01, 0.0, 5))
    assert abs(ber["rho0_hat"] - 0.01) < 0.002
    voted = cc.majority_vote(img, 0.01, 0.0, 5, 3)
    assert cc.bit_error_rate(img, voted)["rho0_hat"] < 0.002
    with pytest.raises(cc.ColdcarveError) as err:
        cc.majority_vote(img, 0.01, 0.0, 5, 2)
    assert err.value.code == "EvenTrialCount"


def test_metrics_and_sanitize():
    assert cc.rad(1.0, 0.53) == pytest.approx(0.47)
    with pytest.raises(cc.ColdcarveError):
        cc.rad(0.0, 0.5)
    out = cc.sanitize_weights(np.array([12.0, 1e-7, np.nan, 0.5], dtype=np.float32))
    assert out[0] == pytest.approx(3.0)
    assert out[2] == 0.0 and out[3] == 0.5
    a = np.ones(2500, dtype=np.float32)
    b = a.copy()
    b[0] = 2.0
    assert cc.weight_value_error_rate(a, b) == pytest.approx(0.0004)


def test_pipeline_commands(tmp_path):
    cfg = cc.load_config(os.path.join(ROOT, "fixtures", "xor.json"))
    cfg.out = str(tmp_path)
    assert "accuracy" in cc.train(cfg)["summary"]
    cc.attack(cfg, parallel=True)
    cc.correct(cfg)
    cc.evaluate(cfg, "corrected")
    rep = cc.report(str(tmp_path), str(tmp_path))
    assert len(rep["files"]) == 4
    assert json.loads(cfg.to_json())["model"] == "mlp_xor"
    with pytest.raises(cc.ColdcarveError) as err:
        cc.report(str(tmp_path / "missing"), str(tmp_path))
    assert err.value.code == "Io"
