#pragma once

// Minimal non-validating XML reader/writer helpers, sufficient for SOAP 1.1
// envelopes. Supports the XML declaration, comments, processing instructions,
// CDATA sections, the five predefined entities and numeric character
// references. DOCTYPE declarations are rejected.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sem::xml {

class XmlError : public std::runtime_error {
 public:
  XmlError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

struct Element {
  std::string name;  // qualified name as written, e.g. "soap:Body"
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;
  std::string text;  // character data directly under this element, concatenated

  std::string_view local_name() const noexcept {
    std::string_view n = name;
    auto colon = n.find(':');
    return colon == std::string_view::npos ? n : n.substr(colon + 1);
  }

  const Element* child(std::string_view local) const noexcept {
    for (const auto& c : children) {
      if (c.local_name() == local) return &c;
    }
    return nullptr;
  }

  const std::string* attribute(std::string_view qname) const noexcept {
    for (const auto& [k, v] : attributes) {
      if (k == qname) return &v;
    }
    return nullptr;
  }
};

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

inline bool is_blank(std::string_view s) noexcept {
  for (char c : s) {
    if (!is_space(c)) return false;
  }
  return true;
}

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

class Parser {
 public:
  static constexpr std::size_t kMaxDepth = 256;

  explicit Parser(std::string_view in) : in_(in) {}

  Element parse_document() {
    skip_bom();
    if (starts_with("<?xml")) skip_pi();
    skip_misc();
    if (starts_with("<!DOCTYPE")) fail("DOCTYPE is not supported");
    if (eof() || peek() != '<') fail("expected root element");
    Element root = parse_element(0);
    skip_misc();
    if (!eof()) fail("content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw XmlError(what, pos_); }

  bool eof() const noexcept { return pos_ >= in_.size(); }
  char peek() const noexcept { return in_[pos_]; }
  bool starts_with(std::string_view s) const noexcept {
    return in_.substr(pos_, s.size()) == s;
  }

  void expect(std::string_view s) {
    if (!starts_with(s)) fail("expected '" + std::string(s) + "'");
    pos_ += s.size();
  }

  void skip_bom() {
    if (starts_with("\xEF\xBB\xBF")) pos_ += 3;
  }

  void skip_space() {
    while (!eof() && is_space(peek())) ++pos_;
  }

  void skip_until(std::string_view terminator, const char* what) {
    auto end = in_.find(terminator, pos_);
    if (end == std::string_view::npos) fail(std::string("unterminated ") + what);
    pos_ = end + terminator.size();
  }

  void skip_pi() { skip_until("?>", "processing instruction"); }
  void skip_comment() {
    pos_ += 4;
    skip_until("-->", "comment");
  }

  void skip_misc() {
    for (;;) {
      skip_space();
      if (starts_with("<!--")) {
        skip_comment();
      } else if (starts_with("<?")) {
        skip_pi();
      } else {
        return;
      }
    }
  }

  static bool is_name_start(unsigned char c) noexcept {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == ':' || c >= 0x80;
  }
  static bool is_name_char(unsigned char c) noexcept {
    return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
  }

  std::string parse_name() {
    if (eof() || !is_name_start(static_cast<unsigned char>(peek()))) fail("expected name");
    auto start = pos_;
    while (!eof() && is_name_char(static_cast<unsigned char>(peek()))) ++pos_;
    return std::string(in_.substr(start, pos_ - start));
  }

  void parse_reference(std::string& out) {
    ++pos_;  // '&'
    auto semi = in_.find(';', pos_);
    if (semi == std::string_view::npos || semi - pos_ > 12) fail("malformed entity reference");
    std::string_view ref = in_.substr(pos_, semi - pos_);
    if (ref == "lt") {
      out.push_back('<');
    } else if (ref == "gt") {
      out.push_back('>');
    } else if (ref == "amp") {
      out.push_back('&');
    } else if (ref == "quot") {
      out.push_back('"');
    } else if (ref == "apos") {
      out.push_back('\'');
    } else if (ref.size() > 1 && ref[0] == '#') {
      std::uint32_t cp = 0;
      bool hex = ref[1] == 'x';
      std::string_view digits = ref.substr(hex ? 2 : 1);
      if (digits.empty()) fail("empty character reference");
      for (char c : digits) {
        std::uint32_t d;
        if (c >= '0' && c <= '9') {
          d = static_cast<std::uint32_t>(c - '0');
        } else if (hex && c >= 'a' && c <= 'f') {
          d = static_cast<std::uint32_t>(c - 'a' + 10);
        } else if (hex && c >= 'A' && c <= 'F') {
          d = static_cast<std::uint32_t>(c - 'A' + 10);
        } else {
          fail("bad digit in character reference");
        }
        cp = cp * (hex ? 16 : 10) + d;
        if (cp > 0x10FFFF) fail("character reference out of range");
      }
      if (cp == 0) fail("NUL character reference");
      append_utf8(out, cp);
    } else {
      fail("unknown entity '" + std::string(ref) + "'");
    }
    pos_ = semi + 1;
  }

  std::string parse_attribute_value() {
    if (eof() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
    char quote = peek();
    ++pos_;
    std::string value;
    for (;;) {
      if (eof()) fail("unterminated attribute value");
      char c = peek();
      if (c == quote) {
        ++pos_;
        return value;
      }
      if (c == '<') fail("'<' in attribute value");
      if (c == '&') {
        parse_reference(value);
      } else {
        value.push_back(c);
        ++pos_;
      }
    }
  }

  Element parse_element(std::size_t depth) {
    if (depth >= kMaxDepth) fail("element nesting too deep");
    expect("<");
    Element e;
    e.name = parse_name();
    for (;;) {
      bool had_space = !eof() && is_space(peek());
      skip_space();
      if (eof()) fail("unterminated start tag");
      if (starts_with("/>")) {
        pos_ += 2;
        return e;
      }
      if (peek() == '>') {
        ++pos_;
        break;
      }
      if (!had_space) fail("expected whitespace before attribute");
      std::string key = parse_name();
      skip_space();
      expect("=");
      skip_space();
      std::string value = parse_attribute_value();
      if (e.attribute(key) != nullptr) fail("duplicate attribute '" + key + "'");
      e.attributes.emplace_back(std::move(key), std::move(value));
    }
    parse_content(e, depth);
    return e;
  }

  void parse_content(Element& e, std::size_t depth) {
    for (;;) {
      if (eof()) fail("unclosed element <" + e.name + ">");
      char c = peek();
      if (c == '<') {
        if (starts_with("</")) {
          pos_ += 2;
          std::string closing = parse_name();
          if (closing != e.name) fail("mismatched closing tag </" + closing + "> for <" + e.name + ">");
          skip_space();
          expect(">");
          return;
        }
        if (starts_with("<!--")) {
          skip_comment();
        } else if (starts_with("<![CDATA[")) {
          pos_ += 9;
          auto end = in_.find("]]>", pos_);
          if (end == std::string_view::npos) fail("unterminated CDATA section");
          e.text.append(in_.substr(pos_, end - pos_));
          pos_ = end + 3;
        } else if (starts_with("<?")) {
          skip_pi();
        } else if (starts_with("<!")) {
          fail("unexpected markup declaration");
        } else {
          e.children.push_back(parse_element(depth + 1));
        }
      } else if (c == '&') {
        parse_reference(e.text);
      } else {
        e.text.push_back(c);
        ++pos_;
      }
    }
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Throws XmlError on malformed input.
inline Element parse(std::string_view document) { return detail::Parser(document).parse_document(); }

inline void append_escaped(std::string& out, std::string_view s, bool attribute = false) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"':
        if (attribute) {
          out += "&quot;";
        } else {
          out.push_back(c);
        }
        break;
      default: out.push_back(c);
    }
  }
}

inline std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  append_escaped(out, s);
  return out;
}

}  // namespace sem::xml
