#include "phrc/nn/checkpoint.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/numfmt.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace phrc::nn {
namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rem = bytes.size() - i;
  if (rem == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rem == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError(0, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> c{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        c[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw ParseError(0, "base64 padding in the middle");
        c[k] = decode_char(ch);
        if (c[k] < 0) throw ParseError(0, "invalid base64 character");
      }
    }
    const std::uint32_t v = (c[0] << 18) | (c[1] << 12) | (c[2] << 6) | c[3];
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

void write_checkpoint(std::ostream& out, const nlohmann::json& netcfg, const ParamStore& params,
                      const std::map<std::string, nlohmann::json>& sections) {
  out << "#NETCFG " << netcfg.dump() << '\n';
  for (const auto& [tag, body] : sections) out << '#' << tag << ' ' << body.dump() << '\n';
  for (const ParamTensor& p : params.tensors()) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(p.value.data());
    const std::size_t n = static_cast<std::size_t>(p.value.size()) * sizeof(double);
    out << p.name << ';' << p.value.rows() << ',' << p.value.cols() << ';'
        << base64_encode(std::span<const std::uint8_t>(raw, n)) << '\n';
  }
  if (!out) throw IoError("write_checkpoint: stream failure");
}

CheckpointData read_checkpoint(std::istream& in) {
  CheckpointData data;
  std::string line;
  std::size_t line_no = 0;
  auto parse_json = [&](std::string_view body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("checkpoint json: ") + e.what());
    }
  };
  if (!std::getline(in, line) || line.rfind("#NETCFG ", 0) != 0)
    throw ParseError(1, "expected '#NETCFG {json}' line");
  ++line_no;
  data.netcfg = parse_json(std::string_view(line).substr(8));

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto space = line.find(' ');
      if (space == std::string::npos) throw ParseError(line_no, "section line without body");
      data.sections[line.substr(1, space - 1)] = parse_json(std::string_view(line).substr(space + 1));
      continue;
    }
    const auto s1 = line.find(';');
    const auto s2 = line.find(';', s1 == std::string::npos ? 0 : s1 + 1);
    if (s1 == std::string::npos || s2 == std::string::npos)
      throw ParseError(line_no, "expected name;shape;values");
    const std::string name = line.substr(0, s1);
    const std::string shape = line.substr(s1 + 1, s2 - s1 - 1);
    const auto comma = shape.find(',');
    if (comma == std::string::npos) throw ParseError(line_no, "shape must be rows,cols");
    const auto rows = parse_int(std::string_view(shape).substr(0, comma));
    const auto cols = parse_int(std::string_view(shape).substr(comma + 1));
    if (!rows || !cols || *rows < 0 || *cols < 0) throw ParseError(line_no, "bad shape");
    std::vector<std::uint8_t> bytes;
    try {
      bytes = base64_decode(std::string_view(line).substr(s2 + 1));
    } catch (const ParseError& e) {
      throw ParseError(line_no, e.what());
    }
    Mat value(*rows, *cols);
    if (bytes.size() != static_cast<std::size_t>(value.size()) * sizeof(double))
      throw ParseError(line_no, "value count does not match shape for '" + name + "'");
    if (!bytes.empty()) std::memcpy(value.data(), bytes.data(), bytes.size());
    data.params.add(name, std::move(value));
  }
  return data;
}

void load_values(const ParamStore& from, ParamStore& into) {
  if (from.size() != into.size())
    throw ValidationError("checkpoint has " + std::to_string(from.size()) + " tensors, model expects " +
                          std::to_string(into.size()));
  for (ParamTensor& t : into.tensors()) {
    const int i = from.find(t.name);
    if (i < 0) throw ValidationError("checkpoint lacks tensor '" + t.name + "'");
    const Mat& v = from[i].value;
    if (v.rows() != t.value.rows() || v.cols() != t.value.cols())
      throw ValidationError("shape mismatch for tensor '" + t.name + "'");
    t.value = v;
  }
}

}  // namespace phrc::nn
