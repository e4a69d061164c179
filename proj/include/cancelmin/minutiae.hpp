#pragma once

// Core minutiae types, angle arithmetic and the plain-text .xyt format.
//
// Coordinates follow the image convention: x grows rightward, y grows
// downward. Orientations are integer degrees in [0, 360), measured
// counterclockwise (as seen on screen) from the +x axis.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cancelmin {

class ParseError : public std::runtime_error {
public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on an operation argument.
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct Minutia {
  int x = 0;
  int y = 0;
  int theta = 0;

  friend bool operator==(const Minutia&, const Minutia&) = default;
  friend auto operator<=>(const Minutia&, const Minutia&) = default;
};

inline std::string to_string(const Minutia& m) {
  return "(" + std::to_string(m.x) + ", " + std::to_string(m.y) + ", " + std::to_string(m.theta) + ")";
}

enum class TemplateKind { Real, Synthetic, Verification };

inline const char* to_string(TemplateKind k) {
  switch (k) {
    case TemplateKind::Real: return "Real";
    case TemplateKind::Synthetic: return "Synthetic";
    case TemplateKind::Verification: return "Verification";
  }
  return "?";
}

struct Provenance {
  std::string finger_id;
  std::string impression_id;
  int generation = 0;  // 0 = real or synthetic source, 1 = first-generation VT, ...
  std::optional<std::uint64_t> st_seed;
  std::optional<int> ordinal_l;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Normalizes any integer angle into [0, 360).
constexpr int normalize_degrees(long long a) noexcept {
  long long r = a % 360;
  return static_cast<int>(r < 0 ? r + 360 : r);
}

/// Smallest absolute difference between two orientations, in [0, 180].
constexpr int angle_diff(int a, int b) noexcept {
  int d = normalize_degrees(static_cast<long long>(a) - b);
  return d > 180 ? 360 - d : d;
}

// Packs a lattice point into one integer key; used for exact-duplicate checks.
inline std::uint64_t lattice_key(const Minutia& m, int height) noexcept {
  return (static_cast<std::uint64_t>(m.x) * static_cast<std::uint64_t>(height) +
          static_cast<std::uint64_t>(m.y)) * 360u + static_cast<std::uint64_t>(m.theta);
}

/// An ordered minutiae set bound to image dimensions. Immutable once built;
/// `create` is the only way in and it enforces every invariant.
class Template {
public:
  Template() = default;

  static Template create(std::vector<Minutia> minutiae, int width, int height, TemplateKind kind,
                         Provenance provenance = {}) {
    if (width < 1 || height < 1) {
      throw ValidationError("template dimensions must be positive, got " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
    if (provenance.generation < 0) throw ValidationError("provenance generation must be >= 0");
    if (provenance.generation >= 1 && (!provenance.st_seed || !provenance.ordinal_l)) {
      throw ValidationError("derived template provenance must record the ST seed and ordinal");
    }
    if (provenance.ordinal_l && *provenance.ordinal_l < 1) {
      throw ValidationError("provenance ordinal must be >= 1");
    }
    for (std::size_t i = 0; i < minutiae.size(); ++i) {
      const Minutia& m = minutiae[i];
      if (m.x < 0 || m.y < 0 || m.x >= width || m.y >= height) {
        throw ValidationError("minutia " + std::to_string(i) + " " + to_string(m) + " lies outside " +
                              std::to_string(width) + "x" + std::to_string(height));
      }
      if (m.theta < 0 || m.theta >= 360) {
        throw ValidationError("minutia " + std::to_string(i) + " " + to_string(m) +
                              " has orientation outside [0, 360)");
      }
    }
    if (kind != TemplateKind::Real) {
      std::unordered_set<std::uint64_t> seen;
      seen.reserve(minutiae.size() * 2);
      for (std::size_t i = 0; i < minutiae.size(); ++i) {
        if (!seen.insert(lattice_key(minutiae[i], height)).second) {
          throw ValidationError("minutia " + std::to_string(i) + " " + to_string(minutiae[i]) + " duplicates an earlier one");
        }
      }
    }
    Template t;
    t.minutiae_ = std::move(minutiae);
    t.width_ = width;
    t.height_ = height;
    t.kind_ = kind;
    t.provenance_ = std::move(provenance);
    return t;
  }

  const std::vector<Minutia>& minutiae() const noexcept { return minutiae_; }
  std::size_t size() const noexcept { return minutiae_.size(); }
  bool empty() const noexcept { return minutiae_.empty(); }
  const Minutia& operator[](std::size_t i) const { return minutiae_[i]; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  TemplateKind kind() const noexcept { return kind_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  friend bool operator==(const Template&, const Template&) = default;

private:
  std::vector<Minutia> minutiae_;
  int width_ = 1;
  int height_ = 1;
  TemplateKind kind_ = TemplateKind::Real;
  Provenance provenance_;
};

namespace detail {

inline bool parse_int_token(std::string_view tok, long long& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size() && !tok.empty();
}

}  // namespace detail

/// Reads `x y theta [quality]` lines. Blank lines are skipped; quality is
/// accepted and dropped.
inline Template parse_xyt(std::string_view text, int width, int height, TemplateKind kind,
                          Provenance provenance = {}) {
  std::vector<Minutia> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      if (j > i) toks.push_back(line.substr(i, j - i));
      i = j;
    }
    if (toks.empty()) continue;
    if (toks.size() != 3 && toks.size() != 4) {
      throw ParseError(line_no, "expected 3 or 4 integers, found " + std::to_string(toks.size()) + " fields");
    }
    long long v[4] = {0, 0, 0, 0};
    for (std::size_t k = 0; k < toks.size(); ++k) {
      if (!detail::parse_int_token(toks[k], v[k])) {
        throw ParseError(line_no, "not an integer: '" + std::string(toks[k]) + "'");
      }
    }
    for (int k = 0; k < 3; ++k) {
      if (v[k] < INT32_MIN || v[k] > INT32_MAX) throw ParseError(line_no, "integer out of range");
    }
    out.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2])});
  }
  return Template::create(std::move(out), width, height, kind, std::move(provenance));
}

inline std::string serialize_xyt(const Template& t) {
  std::string s;
  s.reserve(t.size() * 12);
  for (const Minutia& m : t.minutiae()) {
    s += std::to_string(m.x);
    s += ' ';
    s += std::to_string(m.y);
    s += ' ';
    s += std::to_string(m.theta);
    s += '\n';
  }
  return s;
}

/// Minutiae shared exactly (same x, y and theta) by two templates.
inline std::size_t common_minutiae(const Template& a, const Template& b) {
  std::unordered_set<std::uint64_t> keys;
  const int h = std::max(a.height(), b.height());
  keys.reserve(a.size() * 2);
  for (const Minutia& m : a.minutiae()) keys.insert(lattice_key(m, h));
  std::size_t n = 0;
  for (const Minutia& m : b.minutiae()) n += keys.erase(lattice_key(m, h));
  return n;
}

}  // namespace cancelmin
