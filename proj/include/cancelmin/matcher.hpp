#pragma once

// Pairwise-graph minutiae matcher in the style of NIST Bozorth:
//
//  1. every template becomes a comparison table of minutia pairs, each entry
//     holding the squared segment length and both minutiae's orientations
//     relative to the directed segment;
//  2. entries of the probe and gallery tables whose lengths and relative
//     angles agree within tolerance become compatibility entries, each
//     proposing two minutia correspondences;
//  3. compatibility entries are grown into webs of mutually consistent
//     correspondences; the score is the size of the largest web.
//
// Angle convention: x right, y down, angles counterclockwise on screen from
// +x. The direction of a segment is computed after reducing the vector into
// the first quadrant by exact quarter turns, so rotating a template by a
// multiple of 90 degrees reproduces its table bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "cancelmin/minutiae.hpp"

namespace cancelmin {

struct MatcherParams {
  double d_tol = 0.05;          // relative segment-length tolerance
  int beta_tol = 11;            // degrees
  std::int64_t d_max = 125 * 125;  // squared length cutoff for table entries, px^2

  static constexpr std::int64_t kUncut = std::numeric_limits<std::int64_t>::max();

  static MatcherParams uncut() {
    MatcherParams p;
    p.d_max = kUncut;
    return p;
  }

  void validate() const {
    if (!(d_tol >= 0.0)) throw ContractError("matcher d_tol must be >= 0");
    if (beta_tol < 0 || beta_tol > 180) throw ContractError("matcher beta_tol must lie in [0, 180]");
    if (d_max <= 0) throw ContractError("matcher d_max must be > 0");
  }

  friend bool operator==(const MatcherParams&, const MatcherParams&) = default;
};

struct CTEntry {
  std::uint32_t alpha1 = 0;  // alpha1 < alpha2
  std::uint32_t alpha2 = 0;
  std::int64_t d = 0;        // squared length
  int beta1 = 0;             // theta(alpha1) - direction(alpha1 -> alpha2), in [0, 360)
  int beta2 = 0;             // theta(alpha2) - direction(alpha1 -> alpha2), in [0, 360)

  friend bool operator==(const CTEntry&, const CTEntry&) = default;
};

struct ComparisonTable {
  std::size_t template_size = 0;
  std::int64_t d_max = MatcherParams{}.d_max;
  std::vector<CTEntry> entries;  // ascending by d, then (alpha1, alpha2)
};

struct CompatEntry {
  std::uint32_t probe_ct_idx = 0;
  std::uint32_t gallery_ct_idx = 0;
  bool swapped = false;
  // Correspondences: probe_a <-> gallery_a and probe_b <-> gallery_b.
  std::uint32_t probe_a = 0, gallery_a = 0;
  std::uint32_t probe_b = 0, gallery_b = 0;

  friend bool operator==(const CompatEntry&, const CompatEntry&) = default;
};

struct MatchResult {
  std::size_t score = 0;
  std::size_t compat_count = 0;
  MatcherParams params;
};

/// Direction of the vector (dx, dy) in degrees, [0, 360). (dx, dy) are image
/// offsets (y down); the result is counterclockwise on screen from +x.
inline double segment_direction(std::int64_t dx, std::int64_t dy) {
  std::int64_t u = dx, v = -dy;
  if (u == 0 && v == 0) return 0.0;
  int quarter = 0;
  while (!(u > 0 && v >= 0)) {  // rotate clockwise a quarter turn until in [0, 90)
    const std::int64_t nu = v, nv = -u;
    u = nu;
    v = nv;
    ++quarter;
  }
  return 90.0 * quarter + std::atan2(static_cast<double>(v), static_cast<double>(u)) * (180.0 / 3.14159265358979323846);
}

namespace detail {

inline int relative_angle(int theta, double direction) {
  return normalize_degrees(static_cast<long long>(std::lround(static_cast<double>(theta) - direction)));
}

}  // namespace detail

inline ComparisonTable build_ct(const Template& t, const MatcherParams& p = {}) {
  p.validate();
  ComparisonTable ct;
  ct.template_size = t.size();
  ct.d_max = p.d_max;
  const auto& m = t.minutiae();
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      const std::int64_t dx = static_cast<std::int64_t>(m[j].x) - m[i].x;
      const std::int64_t dy = static_cast<std::int64_t>(m[j].y) - m[i].y;
      const std::int64_t d = dx * dx + dy * dy;
      if (d > p.d_max) continue;
      const double phi = segment_direction(dx, dy);
      ct.entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), d,
                            detail::relative_angle(m[i].theta, phi), detail::relative_angle(m[j].theta, phi)});
    }
  }
  std::sort(ct.entries.begin(), ct.entries.end(), [](const CTEntry& a, const CTEntry& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.alpha1 != b.alpha1) return a.alpha1 < b.alpha1;
    return a.alpha2 < b.alpha2;
  });
  return ct;
}

/// |sqrt(dp) - sqrt(dg)| <= d_tol * max(sqrt(dp), sqrt(dg))
inline bool lengths_compatible(std::int64_t dp, std::int64_t dg, double d_tol) {
  const double a = std::sqrt(static_cast<double>(dp));
  const double b = std::sqrt(static_cast<double>(dg));
  return std::abs(a - b) <= d_tol * std::max(a, b);
}

/// Pairs up table entries whose geometry agrees. The swapped pairing reads
/// the gallery segment in the opposite direction, which shifts both of its
/// relative angles by 180 degrees.
inline std::vector<CompatEntry> build_compat(const ComparisonTable& probe, const ComparisonTable& gallery,
                                             const MatcherParams& p = {}) {
  p.validate();
  std::vector<CompatEntry> out;
  const auto& ge = gallery.entries;
  std::vector<double> gallery_len(ge.size());
  for (std::size_t j = 0; j < ge.size(); ++j) gallery_len[j] = std::sqrt(static_cast<double>(ge[j].d));

  for (std::size_t i = 0; i < probe.entries.size(); ++i) {
    const CTEntry& a = probe.entries[i];
    const double len = std::sqrt(static_cast<double>(a.d));
    // Candidate window on gallery length; the exact test below decides.
    const double lo = len * (1.0 - p.d_tol) * (1.0 - 1e-9) - 1e-9;
    const double hi = p.d_tol < 1.0 ? len / (1.0 - p.d_tol) * (1.0 + 1e-9) + 1e-9
                                    : std::numeric_limits<double>::infinity();
    auto first = std::lower_bound(gallery_len.begin(), gallery_len.end(), lo);
    for (auto it = first; it != gallery_len.end() && *it <= hi; ++it) {
      const auto j = static_cast<std::size_t>(it - gallery_len.begin());
      const CTEntry& b = ge[j];
      if (!lengths_compatible(a.d, b.d, p.d_tol)) continue;
      if (angle_diff(a.beta1, b.beta1) <= p.beta_tol && angle_diff(a.beta2, b.beta2) <= p.beta_tol) {
        out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), false, a.alpha1, b.alpha1,
                       a.alpha2, b.alpha2});
      }
      if (angle_diff(a.beta1, b.beta2 + 180) <= p.beta_tol && angle_diff(a.beta2, b.beta1 + 180) <= p.beta_tol) {
        out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), true, a.alpha1, b.alpha2,
                       a.alpha2, b.alpha1});
      }
    }
  }
  return out;
}

/// A correspondence may join a web once compatibility entries link it to
/// this many of the web's members (or to all of them, while the web is
/// smaller than that).
inline constexpr std::size_t kWebMinSupport = 3;

/// Grows webs of one-to-one minutia correspondences out of compatibility
/// entries and returns the largest.
///
/// A web starts from one entry (two correspondences). It then repeatedly
/// admits the candidate correspondence with the most entries linking it to
/// correspondences already in the web (at least min(web size,
/// kWebMinSupport); ties go to the lowest (probe, gallery) pair), provided
/// neither of its minutiae is already mapped elsewhere. Starts are tried in entry order; an entry whose
/// two correspondences already sit together in an earlier web is not
/// restarted.
inline MatchResult traverse_score(std::span<const CompatEntry> compat, std::size_t probe_size,
                                  std::size_t gallery_size) {
  MatchResult result;
  result.compat_count = compat.size();
  if (compat.empty()) return result;

  // Dense ids for the distinct correspondences, ordered by (probe, gallery).
  const auto key = [gallery_size](std::uint32_t pm, std::uint32_t gm) {
    return static_cast<std::uint64_t>(pm) * gallery_size + gm;
  };
  std::vector<std::uint64_t> keys;
  keys.reserve(compat.size() * 2);
  for (const CompatEntry& e : compat) {
    keys.push_back(key(e.probe_a, e.gallery_a));
    keys.push_back(key(e.probe_b, e.gallery_b));
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  const std::size_t nc = keys.size();
  const auto id_of = [&](std::uint64_t k) {
    return static_cast<std::uint32_t>(std::lower_bound(keys.begin(), keys.end(), k) - keys.begin());
  };

  std::vector<std::uint32_t> ends(compat.size() * 2);
  std::vector<std::uint32_t> degree(nc + 1, 0);
  for (std::size_t e = 0; e < compat.size(); ++e) {
    ends[2 * e] = id_of(key(compat[e].probe_a, compat[e].gallery_a));
    ends[2 * e + 1] = id_of(key(compat[e].probe_b, compat[e].gallery_b));
    ++degree[ends[2 * e] + 1];
    ++degree[ends[2 * e + 1] + 1];
  }
  // CSR adjacency: for each correspondence, (neighbor, entry) pairs sorted by
  // neighbor, so repeated links to one neighbor sit together.
  std::vector<std::uint32_t> offset(nc + 1, 0);
  for (std::size_t c = 0; c < nc; ++c) offset[c + 1] = offset[c] + degree[c + 1];
  std::vector<std::pair<std::uint32_t, std::uint32_t>> adj(offset[nc]);
  {
    std::vector<std::uint32_t> fill(offset.begin(), offset.end() - 1);
    for (std::size_t e = 0; e < compat.size(); ++e) {
      const std::uint32_t a = ends[2 * e], b = ends[2 * e + 1];
      adj[fill[a]++] = {b, static_cast<std::uint32_t>(e)};
      adj[fill[b]++] = {a, static_cast<std::uint32_t>(e)};
    }
    for (std::size_t c = 0; c < nc; ++c) std::sort(adj.begin() + offset[c], adj.begin() + offset[c + 1]);
  }
  std::vector<std::uint32_t> corr_probe(nc), corr_gallery(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    corr_probe[c] = static_cast<std::uint32_t>(keys[c] / gallery_size);
    corr_gallery[c] = static_cast<std::uint32_t>(keys[c] % gallery_size);
  }

  // Per-web scratch, invalidated by bumping `stamp` instead of clearing.
  std::uint32_t stamp = 0;
  std::vector<std::uint32_t> web_stamp(nc, 0), support_stamp(nc, 0), support(nc, 0);
  std::vector<std::uint32_t> probe_stamp(probe_size, 0), gallery_stamp(gallery_size, 0);
  std::vector<bool> covered(compat.size(), false);
  std::vector<std::uint32_t> web, frontier;

  const auto add = [&](std::uint32_t c) {
    web_stamp[c] = stamp;
    probe_stamp[corr_probe[c]] = stamp;
    gallery_stamp[corr_gallery[c]] = stamp;
    web.push_back(c);
    for (std::uint32_t k = offset[c]; k < offset[c + 1]; ++k) {
      const std::uint32_t n = adj[k].first;
      if (web_stamp[n] == stamp || (k > offset[c] && adj[k - 1].first == n)) continue;
      if (support_stamp[n] != stamp) {
        support_stamp[n] = stamp;
        support[n] = 0;
        frontier.push_back(n);
      }
      ++support[n];
    }
  };

  std::size_t best = 0;
  for (std::size_t e = 0; e < compat.size(); ++e) {
    if (covered[e]) continue;
    ++stamp;
    web.clear();
    frontier.clear();
    add(ends[2 * e]);
    add(ends[2 * e + 1]);
    for (;;) {
      std::uint32_t pick = UINT32_MAX;
      std::uint32_t pick_support = 0;
      const auto needed = static_cast<std::uint32_t>(std::min(web.size(), kWebMinSupport));
      std::size_t keep = 0;
      for (std::uint32_t c : frontier) {
        // Joined or blocked candidates never become admissible again.
        if (web_stamp[c] == stamp || probe_stamp[corr_probe[c]] == stamp ||
            gallery_stamp[corr_gallery[c]] == stamp) {
          continue;
        }
        frontier[keep++] = c;
        const std::uint32_t s = support[c];
        if (s < needed) continue;
        if (s > pick_support || (s == pick_support && c < pick)) {
          pick = c;
          pick_support = s;
        }
      }
      frontier.resize(keep);
      if (pick == UINT32_MAX) break;
      add(pick);
    }
    best = std::max(best, web.size());
    for (std::uint32_t c : web) {
      for (std::uint32_t k = offset[c]; k < offset[c + 1]; ++k) {
        if (web_stamp[adj[k].first] == stamp) covered[adj[k].second] = true;
      }
    }
  }
  result.score = best;
  return result;
}

inline MatchResult match(const Template& probe, const Template& gallery, const MatcherParams& p = {}) {
  const ComparisonTable a = build_ct(probe, p);
  const ComparisonTable b = build_ct(gallery, p);
  const std::vector<CompatEntry> compat = build_compat(a, b, p);
  MatchResult r = traverse_score(compat, probe.size(), gallery.size());
  r.params = p;
  return r;
}

}  // namespace cancelmin
