#include "coldcarve/xml_dom.hpp"

#include <cctype>

#include "coldcarve/error.hpp"

namespace coldcarve::xml {

const std::string* Element::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes)
    if (k == key) return &v;
  return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view child) const {
  std::vector<const Element*> out;
  for (const auto& c : children)
    if (c.name == child) out.push_back(&c);
  return out;
}

std::string escape(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Element document() {
    skip_misc();
    if (starts_with("<?")) {
      const auto end = text_.find("?>", pos_);
      if (end == std::string_view::npos) fail("unterminated prolog");
      pos_ = end + 2;
    }
    skip_misc();
    if (!starts_with("<")) fail("expected root element");
    Element root = element();
    skip_misc();
    if (pos_ != text_.size()) fail("trailing content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::MalformedXml, what + " at offset " + std::to_string(pos_));
  }

  bool starts_with(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }
  bool at_end() const { return pos_ >= text_.size(); }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void skip_misc() {
    for (;;) {
      skip_space();
      if (!starts_with("<!--")) return;
      const auto end = text_.find("-->", pos_);
      if (end == std::string_view::npos) fail("unterminated comment");
      pos_ = end + 3;
    }
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':';
  }

  std::string name() {
    const auto start = pos_;
    while (!at_end() && name_char(text_[pos_])) ++pos_;
    if (pos_ == start) fail("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string decode(std::string_view raw) {
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      const auto semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail("unterminated entity");
      const auto entity = raw.substr(i + 1, semi - i - 1);
      if (entity == "amp") out += '&';
      else if (entity == "lt") out += '<';
      else if (entity == "gt") out += '>';
      else if (entity == "quot") out += '"';
      else if (entity == "apos") out += '\'';
      else fail("unknown entity &" + std::string(entity) + ";");
      i = semi;
    }
    return out;
  }

  Element element() {
    Element el;
    el.offset = pos_;
    ++pos_;  // '<'
    el.name = name();
    for (;;) {
      skip_space();
      if (at_end()) fail("unterminated start tag <" + el.name);
      if (starts_with("/>")) {
        pos_ += 2;
        return el;
      }
      if (text_[pos_] == '>') {
        ++pos_;
        break;
      }
      std::string key = name();
      skip_space();
      if (at_end() || text_[pos_] != '=') fail("expected '=' after attribute " + key);
      ++pos_;
      skip_space();
      if (at_end() || (text_[pos_] != '"' && text_[pos_] != '\'')) fail("expected quoted value for " + key);
      const char quote = text_[pos_++];
      const auto close = text_.find(quote, pos_);
      if (close == std::string_view::npos) fail("unterminated attribute value for " + key);
      const auto raw = text_.substr(pos_, close - pos_);
      if (raw.find('<') != std::string_view::npos) fail("'<' inside attribute value");
      if (el.attribute(key)) fail("duplicate attribute " + key);
      el.attributes.emplace_back(std::move(key), decode(raw));
      pos_ = close + 1;
    }

    for (;;) {
      const auto lt = text_.find('<', pos_);
      if (lt == std::string_view::npos) fail("element <" + el.name + "> is never closed");
      el.text += decode(text_.substr(pos_, lt - pos_));
      pos_ = lt;
      if (starts_with("<!--")) {
        skip_misc();
        continue;
      }
      if (starts_with("</")) {
        pos_ += 2;
        const std::string closing = name();
        skip_space();
        if (at_end() || text_[pos_] != '>') fail("malformed end tag </" + closing);
        ++pos_;
        if (closing != el.name) fail("</" + closing + "> closes <" + el.name + ">");
        return el;
      }
      el.children.push_back(element());
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Element parse_document(std::string_view text) { return Parser(text).document(); }

}  // namespace coldcarve::xml
