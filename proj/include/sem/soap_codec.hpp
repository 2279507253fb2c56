#pragma once

// SOAP 1.1 request parsing, parameter-sequence normalization and result-set
// response serialization.
//
// Envelope layout produced by build_response (self-defined, stable):
//
//   <?xml version="1.0" encoding="utf-8"?>
//   <soap:Envelope xmlns:soap="http://schemas.xmlsoap.org/soap/envelope/">
//    <soap:Body><{Op}Response>
//     <columns><column>name</column>...</columns>
//     <rows><row><cell>v</cell>...</row>...</rows>
//    </{Op}Response></soap:Body>
//   </soap:Envelope>
//
// (emitted without whitespace between tags; empty containers as <rows/>).

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sem/types.hpp"
#include "sem/xml.hpp"

namespace sem {

inline constexpr char kSequenceSeparator = '\x1F';
inline constexpr std::string_view kSoapEnvNs = "http://schemas.xmlsoap.org/soap/envelope/";

struct CaseInsensitiveLess {
  bool operator()(std::string_view a, std::string_view b) const noexcept {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](char x, char y) {
      return std::tolower(static_cast<unsigned char>(x)) < std::tolower(static_cast<unsigned char>(y));
    });
  }
  using is_transparent = void;
};

using HeaderMap = std::map<std::string, std::string, CaseInsensitiveLess>;

class SoapError : public std::runtime_error {
 public:
  enum class Kind { Parse, NonStringParameter, SeparatorInValue };

  SoapError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct SoapRequest {
  RequestId request_id{};
  TimePoint arrival_time{};
  std::string raw_envelope;
  std::string operation;
  std::vector<std::string> parameters;
  std::size_t content_length = 0;
  std::string soap_action;   // forwarded verbatim
  std::string content_type;  // forwarded verbatim
};

struct ParameterSequence {
  std::string bytes;

  std::size_t size() const noexcept { return bytes.size(); }
  bool empty() const noexcept { return bytes.empty(); }
  std::string_view view() const noexcept { return bytes; }

  friend bool operator==(const ParameterSequence&, const ParameterSequence&) = default;
};

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool valid() const noexcept {
    return std::all_of(rows.begin(), rows.end(), [&](const auto& r) { return r.size() == columns.size(); });
  }

  friend bool operator==(const ResultSet&, const ResultSet&) = default;
};

namespace detail {

inline bool is_text_xml(std::string_view content_type) {
  auto semi = content_type.find(';');
  std::string_view media = content_type.substr(0, semi);
  while (!media.empty() && xml::is_space(media.back())) media.remove_suffix(1);
  while (!media.empty() && xml::is_space(media.front())) media.remove_prefix(1);
  constexpr std::string_view kTextXml = "text/xml";
  return std::equal(media.begin(), media.end(), kTextXml.begin(), kTextXml.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == b;
  });
}

inline const xml::Element& soap_body(const xml::Element& envelope) {
  if (envelope.local_name() != "Envelope") {
    throw SoapError(SoapError::Kind::Parse, "root element is not a SOAP Envelope");
  }
  const xml::Element* body = envelope.child("Body");
  if (body == nullptr) throw SoapError(SoapError::Kind::Parse, "SOAP Envelope has no Body");
  return *body;
}

inline xml::Element parse_xml(std::string_view raw) {
  try {
    return xml::parse(raw);
  } catch (const xml::XmlError& e) {
    throw SoapError(SoapError::Kind::Parse, e.what());
  }
}

}  // namespace detail

// Parses one SOAP 1.1 request body. The operation is the first element child
// of soap:Body; its element children are the parameters, in document order.
// Throws SoapError (Parse or NonStringParameter).
inline SoapRequest parse_request(std::string_view raw, const HeaderMap& headers = {}) {
  SoapRequest req;
  if (auto it = headers.find("Content-Type"); it != headers.end()) {
    if (!detail::is_text_xml(it->second)) {
      throw SoapError(SoapError::Kind::Parse, "unsupported content type '" + it->second + "'");
    }
    req.content_type = it->second;
  }
  if (auto it = headers.find("SOAPAction"); it != headers.end()) req.soap_action = it->second;

  xml::Element envelope = detail::parse_xml(raw);
  const xml::Element& body = detail::soap_body(envelope);
  if (body.children.empty()) throw SoapError(SoapError::Kind::Parse, "SOAP Body is empty");
  const xml::Element& op = body.children.front();
  if (!xml::is_blank(op.text)) {
    throw SoapError(SoapError::Kind::NonStringParameter,
                    "operation element <" + op.name + "> carries mixed text content");
  }

  req.operation = std::string(op.local_name());
  req.parameters.reserve(op.children.size());
  for (const auto& p : op.children) {
    if (!p.children.empty()) {
      throw SoapError(SoapError::Kind::NonStringParameter,
                      "parameter <" + p.name + "> of " + req.operation + " is not a plain string");
    }
    req.parameters.push_back(p.text);
  }
  req.raw_envelope.assign(raw);
  req.content_length = raw.size();
  if (auto it = headers.find("Content-Length"); it != headers.end()) {
    try {
      req.content_length = static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
      throw SoapError(SoapError::Kind::Parse, "bad Content-Length header");
    }
  }
  return req;
}

inline void append_lowered(std::string& out, std::string_view s) {
  for (char c : s) out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
}

inline std::optional<ParameterSequence> try_build_parameter_sequence(std::string_view operation,
                                                                     const std::vector<std::string>& parameters) {
  std::size_t total = operation.size();
  for (const auto& p : parameters) {
    if (p.find(kSequenceSeparator) != std::string::npos) return std::nullopt;
    total += p.size() + 1;
  }
  if (operation.find(kSequenceSeparator) != std::string_view::npos) return std::nullopt;

  ParameterSequence seq;
  seq.bytes.reserve(total);
  append_lowered(seq.bytes, operation);
  for (const auto& p : parameters) {
    seq.bytes.push_back(kSequenceSeparator);
    append_lowered(seq.bytes, p);
  }
  return seq;
}

inline std::optional<ParameterSequence> try_build_parameter_sequence(const SoapRequest& req) {
  return try_build_parameter_sequence(req.operation, req.parameters);
}

// Throws SoapError(SeparatorInValue) when a value contains 0x1F.
inline ParameterSequence build_parameter_sequence(const SoapRequest& req) {
  auto seq = try_build_parameter_sequence(req);
  if (!seq) throw SoapError(SoapError::Kind::SeparatorInValue, "parameter value contains the 0x1F separator");
  return *std::move(seq);
}

namespace detail {

inline void open_envelope(std::string& out) {
  out += "<?xml version=\"1.0\" encoding=\"utf-8\"?><soap:Envelope xmlns:soap=\"";
  out += kSoapEnvNs;
  out += "\"><soap:Body>";
}

inline void close_envelope(std::string& out) { out += "</soap:Body></soap:Envelope>"; }

inline void append_element(std::string& out, std::string_view tag, std::string_view value) {
  out.push_back('<');
  out += tag;
  out.push_back('>');
  xml::append_escaped(out, value);
  out += "</";
  out += tag;
  out.push_back('>');
}

}  // namespace detail

inline std::string build_response(const ResultSet& result, std::string_view operation) {
  std::string out;
  std::size_t estimate = 256;
  for (const auto& r : result.rows) {
    for (const auto& c : r) estimate += c.size() + 16;
  }
  out.reserve(estimate);
  detail::open_envelope(out);
  out.push_back('<');
  out += operation;
  out += "Response>";

  if (result.columns.empty()) {
    out += "<columns/>";
  } else {
    out += "<columns>";
    for (const auto& c : result.columns) detail::append_element(out, "column", c);
    out += "</columns>";
  }
  if (result.rows.empty()) {
    out += "<rows/>";
  } else {
    out += "<rows>";
    for (const auto& row : result.rows) {
      out += "<row>";
      for (const auto& cell : row) detail::append_element(out, "cell", cell);
      out += "</row>";
    }
    out += "</rows>";
  }

  out += "</";
  out += operation;
  out += "Response>";
  detail::close_envelope(out);
  return out;
}

// Inverse of build_response. Throws SoapError(Parse) on anything else,
// including fault envelopes.
inline ResultSet parse_response(std::string_view raw) {
  xml::Element envelope = detail::parse_xml(raw);
  const xml::Element& body = detail::soap_body(envelope);
  if (body.children.empty()) throw SoapError(SoapError::Kind::Parse, "empty response body");
  const xml::Element& op = body.children.front();
  if (op.local_name() == "Fault") throw SoapError(SoapError::Kind::Parse, "response is a SOAP fault");

  ResultSet rs;
  if (const auto* cols = op.child("columns")) {
    for (const auto& c : cols->children) rs.columns.push_back(c.text);
  }
  if (const auto* rows = op.child("rows")) {
    for (const auto& r : rows->children) {
      auto& row = rs.rows.emplace_back();
      for (const auto& cell : r.children) row.push_back(cell.text);
    }
  }
  return rs;
}

// Client-side request envelope; parameter element names are positional
// labels, only their order and text matter to the proxy.
inline std::string build_request(std::string_view operation, const std::vector<std::string>& names,
                                 const std::vector<std::string>& values, std::string_view ns = "urn:sem:demo") {
  std::string out;
  detail::open_envelope(out);
  out.push_back('<');
  out += operation;
  out += " xmlns=\"";
  xml::append_escaped(out, ns, true);
  if (values.empty()) {
    out += "\"/>";
  } else {
    out += "\">";
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::string name = i < names.size() ? names[i] : "p" + std::to_string(i);
      detail::append_element(out, name, values[i]);
    }
    out += "</";
    out += operation;
    out.push_back('>');
  }
  detail::close_envelope(out);
  return out;
}

inline std::string build_fault(std::string_view code, std::string_view message) {
  std::string out;
  detail::open_envelope(out);
  out += "<soap:Fault>";
  detail::append_element(out, "faultcode", code);
  detail::append_element(out, "faultstring", message);
  out += "</soap:Fault>";
  detail::close_envelope(out);
  return out;
}

inline bool is_fault(std::string_view raw) {
  try {
    xml::Element envelope = xml::parse(raw);
    const xml::Element& body = detail::soap_body(envelope);
    return !body.children.empty() && body.children.front().local_name() == "Fault";
  } catch (const std::exception&) {
    return false;
  }
}

inline std::string_view fault_code_for(SoapError::Kind) noexcept { return "soap:Client"; }

}  // namespace sem

template <>
struct std::hash<sem::ParameterSequence> {
  std::size_t operator()(const sem::ParameterSequence& s) const noexcept {
    return std::hash<std::string>{}(s.bytes);
  }
};
