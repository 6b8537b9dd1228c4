#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace coldcarve::xml {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;
  std::string text;  // concatenated character data, entities decoded
  std::size_t offset = 0;

  const std::string* attribute(std::string_view key) const;
  std::vector<const Element*> children_named(std::string_view child) const;
};

// Strict parser for the element/attribute subset used by the IR dialect.
// Accepts an optional prolog and comments. Throws Error(MalformedXml) when a
// tag is left open, closed out of order, or the markup is not well-formed.
Element parse_document(std::string_view text);

std::string escape(std::string_view raw);

}  // namespace coldcarve::xml
