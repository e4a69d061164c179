#pragma once

// Simulated fingers and impressions. A finger is a latent real template;
// every impression is that template pushed through rigid motion, jitter,
// dropout and spurious detections.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "cancelmin/minutiae.hpp"
#include "cancelmin/synth.hpp"

namespace cancelmin {

struct FingerProfile {
  double mean_minutiae = 58.0;
  double std_minutiae = 18.0;
  int min_minutiae = 2;
  int width = 640;
  int height = 480;
  // Minutiae fall uniformly inside a centered ellipse whose axes are this
  // fraction of the image width and height (the finger's contact area).
  double region_scale = 0.7;

  void validate() const {
    if (!(mean_minutiae > 0.0)) throw ContractError("finger profile mean must be > 0");
    if (!(std_minutiae >= 0.0)) throw ContractError("finger profile std must be >= 0");
    if (min_minutiae < 2) throw ContractError("finger profile min_minutiae must be >= 2");
    if (width < 1 || height < 1) throw ContractError("finger profile dimensions must be positive");
    if (!(region_scale > 0.0 && region_scale <= 1.0)) throw ContractError("finger profile region_scale must lie in (0, 1]");
  }

  friend bool operator==(const FingerProfile&, const FingerProfile&) = default;
};

// Minutiae-count statistics and sensor dimensions of three public databases.
inline FingerProfile fvc2004_profile() { return {58.0, 18.0, 2, 640, 480, 0.7}; }
inline FingerProfile fvc2006_profile() { return {121.0, 27.0, 2, 400, 560, 0.7}; }
inline FingerProfile polyu_profile() { return {136.0, 47.0, 2, 640, 480, 0.7}; }

inline FingerProfile profile_by_name(const std::string& name) {
  if (name == "fvc2004") return fvc2004_profile();
  if (name == "fvc2006") return fvc2006_profile();
  if (name == "polyu") return polyu_profile();
  throw ContractError("unknown finger profile '" + name + "' (expected fvc2004, fvc2006 or polyu)");
}

struct PerturbationModel {
  double max_rotation = 10.0;       // degrees
  int max_translation = 20;         // pixels
  double jitter_sigma = 3.0;        // pixels
  double theta_jitter_sigma = 6.0;  // degrees
  double drop_prob = 0.15;
  int spurious_count_max = 5;

  static PerturbationModel none() { return {0.0, 0, 0.0, 0.0, 0.0, 0}; }

  void validate() const {
    if (!(max_rotation >= 0.0) || max_translation < 0 || !(jitter_sigma >= 0.0) || !(theta_jitter_sigma >= 0.0) ||
        spurious_count_max < 0) {
      throw ContractError("perturbation parameters must be non-negative");
    }
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw ContractError("drop_prob must lie in [0, 1]");
  }

  friend bool operator==(const PerturbationModel&, const PerturbationModel&) = default;
};

inline bool in_finger_region(const FingerProfile& p, int x, int y) {
  const double ax = p.region_scale * p.width / 2.0, ay = p.region_scale * p.height / 2.0;
  const double u = (x + 0.5 - p.width / 2.0) / ax, v = (y + 0.5 - p.height / 2.0) / ay;
  return u * u + v * v <= 1.0;
}

/// Number of lattice points (x, y, theta) inside the finger region.
inline std::uint64_t finger_capacity(const FingerProfile& p) {
  std::uint64_t cells = 0;
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) cells += in_finger_region(p, x, y) ? 1u : 0u;
  }
  return cells * 360u;
}

/// Draws a latent finger: count from a rounded normal clamped to
/// [min_minutiae, region capacity], then distinct minutiae uniform over the
/// finger region (x, y, theta drawn in that order; points outside the region
/// and exact duplicates are redrawn).
inline Template make_finger(SeededGenerator& g, const FingerProfile& profile) {
  profile.validate();
  const double raw = std::round(profile.mean_minutiae + profile.std_minutiae * g.next_gaussian());
  const double count = std::clamp(raw, static_cast<double>(profile.min_minutiae),
                                  static_cast<double>(finger_capacity(profile)));
  std::vector<Minutia> out;
  out.reserve(static_cast<std::size_t>(count));
  std::unordered_set<std::uint64_t> seen;
  while (out.size() < static_cast<std::size_t>(count)) {
    const Minutia m = draw_minutia(g, profile.width, profile.height);
    if (!in_finger_region(profile, m.x, m.y)) continue;
    if (seen.insert(lattice_key(m, profile.height)).second) out.push_back(m);
  }
  return Template::create(std::move(out), profile.width, profile.height, TemplateKind::Real);
}

/// One simulated impression of `rt`. Steps, in order: rotation about the
/// image center, integer translation, per-minutia Gaussian jitter on position
/// and orientation, independent dropout, spurious minutiae, then removal of
/// anything that left the image.
inline Template perturb(const Template& rt, const PerturbationModel& m, SeededGenerator& g) {
  m.validate();
  const double rot = g.next_real(-m.max_rotation, m.max_rotation);
  const auto span = static_cast<std::uint64_t>(2 * m.max_translation + 1);
  const int tx = static_cast<int>(g.next_uniform(span)) - m.max_translation;
  const int ty = static_cast<int>(g.next_uniform(span)) - m.max_translation;

  const double rad = rot * (3.14159265358979323846 / 180.0);
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = rt.width() / 2.0, cy = rt.height() / 2.0;

  struct Moved {
    long long x, y;
    int theta;
  };
  std::vector<Moved> moved;
  moved.reserve(rt.size() + static_cast<std::size_t>(m.spurious_count_max));
  for (const Minutia& p : rt.minutiae()) {
    // Counterclockwise on screen: y points down, hence the sign pattern.
    const double dx = p.x - cx, dy = p.y - cy;
    double x = cx + dx * c + dy * s + tx;
    double y = cy - dx * s + dy * c + ty;
    double theta = p.theta + rot;
    const double jx = g.next_gaussian(), jy = g.next_gaussian(), jt = g.next_gaussian();
    x += m.jitter_sigma * jx;
    y += m.jitter_sigma * jy;
    theta += m.theta_jitter_sigma * jt;
    const bool drop = g.next_unit() < m.drop_prob;
    if (drop) continue;
    moved.push_back({std::llround(x), std::llround(y), normalize_degrees(std::llround(theta))});
  }
  const auto spurious = g.next_uniform(static_cast<std::uint64_t>(m.spurious_count_max) + 1);
  for (std::uint64_t i = 0; i < spurious; ++i) {
    const Minutia p = draw_minutia(g, rt.width(), rt.height());
    moved.push_back({p.x, p.y, p.theta});
  }

  std::vector<Minutia> out;
  out.reserve(moved.size());
  for (const Moved& p : moved) {
    if (p.x < 0 || p.y < 0 || p.x >= rt.width() || p.y >= rt.height()) continue;
    out.push_back({static_cast<int>(p.x), static_cast<int>(p.y), p.theta});
  }
  return Template::create(std::move(out), rt.width(), rt.height(), TemplateKind::Real, rt.provenance());
}

// Role tags folded into derived seeds.
enum class SeedRole : std::uint64_t {
  Finger = 1,
  Impression = 2,
  Synthetic = 3,
  SyntheticAlt = 4,
  SyntheticChild = 5,
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t finger, std::uint64_t slot, SeedRole role) {
  return mix_seed(master, {finger, slot, static_cast<std::uint64_t>(role)});
}

/// The `count` impressions of finger `finger` under `master` seed. Every
/// impression, including the first, is a perturbation of the latent finger.
inline std::vector<Template> simulate_impressions(std::uint64_t master, std::size_t finger, std::size_t count,
                                                  const FingerProfile& profile, const PerturbationModel& model) {
  SeededGenerator fg(derive_seed(master, finger, 0, SeedRole::Finger));
  const Template base = make_finger(fg, profile);
  std::vector<Template> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    SeededGenerator ig(derive_seed(master, finger, j, SeedRole::Impression));
    Template imp = perturb(base, model, ig);
    Provenance p;
    p.finger_id = "finger" + std::to_string(finger);
    p.impression_id = "imp" + std::to_string(j);
    out.push_back(Template::create(imp.minutiae(), imp.width(), imp.height(), TemplateKind::Real, std::move(p)));
  }
  return out;
}

}  // namespace cancelmin
