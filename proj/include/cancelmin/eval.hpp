#pragma once

// Experiment harness: simulated fingers, per-finger synthetic templates,
// verification templates over (N, L) grids, matching protocols, and CSV
// reports.
//
// Seeds. Every random stream is a pure function of the master seed:
//   latent finger f          derive_seed(master, f, 0, Finger)
//   impression j of f        derive_seed(master, f, j, Impression)
//   ST of f at size N        derive_seed(master, f, N, Synthetic)
//   alternate ST (diversity) derive_seed(master, f, N, SyntheticAlt)
//   2nd-generation ST        derive_seed(master, f, N, SyntheticChild)
//
// Aggregation. Per-finger (or per-pair) work runs on a thread pool, but
// scores are reduced in index order, so reports are bit-identical for any
// thread count. Standard deviations use the population formula.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <type_traits>
#include <vector>

#include "cancelmin/knn.hpp"
#include "cancelmin/matcher.hpp"
#include "cancelmin/minutiae.hpp"
#include "cancelmin/simdata.hpp"
#include "cancelmin/synth.hpp"

namespace cancelmin {

enum class Experiment {
  GenuineVt,
  RtVsVt,
  ImpostorVt,
  DiversityVt,
  SecondGeneration,
  CrossGeneration,
  SiblingMatching,
};

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::GenuineVt: return "GenuineVt";
    case Experiment::RtVsVt: return "RtVsVt";
    case Experiment::ImpostorVt: return "ImpostorVt";
    case Experiment::DiversityVt: return "DiversityVt";
    case Experiment::SecondGeneration: return "SecondGeneration";
    case Experiment::CrossGeneration: return "CrossGeneration";
    case Experiment::SiblingMatching: return "SiblingMatching";
  }
  return "?";
}

inline Experiment experiment_from_string(const std::string& s) {
  for (Experiment e : {Experiment::GenuineVt, Experiment::RtVsVt, Experiment::ImpostorVt, Experiment::DiversityVt,
                       Experiment::SecondGeneration, Experiment::CrossGeneration, Experiment::SiblingMatching}) {
    if (s == to_string(e)) return e;
  }
  throw ContractError("unknown experiment '" + s + "'");
}

struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  std::size_t fingers = 50;
  std::size_t impressions = 4;
  FingerProfile profile = fvc2006_profile();
  PerturbationModel perturbation;
  std::vector<std::size_t> n_values = {50, 100, 150, 200, 500, 2000};
  std::vector<std::size_t> l_values = {1, 2, 3, 4, 5, 6};
  MatcherParams matcher;
  Experiment experiment = Experiment::GenuineVt;
  // First-generation transform feeding the multi-generation experiments.
  std::size_t parent_n = 1000;
  std::size_t parent_l = 6;
  unsigned threads = 0;  // 0 = hardware concurrency; never affects results

  void validate() const {
    profile.validate();
    perturbation.validate();
    matcher.validate();
    if (fingers < 1) throw ContractError("fingers must be >= 1");
    if (impressions < 1) throw ContractError("impressions must be >= 1");
    if (n_values.empty()) throw ContractError("n_values must not be empty");
    if (l_values.empty()) throw ContractError("l_values must not be empty");
    const std::size_t min_n = *std::min_element(n_values.begin(), n_values.end());
    const std::size_t max_l = *std::max_element(l_values.begin(), l_values.end());
    if (*std::min_element(l_values.begin(), l_values.end()) < 1) throw ContractError("l_values must be >= 1");
    if (max_l > min_n) {
      throw ContractError("ordinal " + std::to_string(max_l) + " exceeds the smallest N " + std::to_string(min_n));
    }
    const std::uint64_t cap = lattice_capacity(profile.width, profile.height);
    for (std::size_t n : n_values) {
      if (n < 1 || n > cap) throw ContractError("N = " + std::to_string(n) + " outside [1, lattice capacity]");
    }
    switch (experiment) {
      case Experiment::GenuineVt:
      case Experiment::SecondGeneration:
        if (impressions < 2) throw ContractError(std::string(to_string(experiment)) + " needs impressions >= 2");
        break;
      case Experiment::ImpostorVt:
        if (fingers < 2) throw ContractError("ImpostorVt needs fingers >= 2");
        break;
      default: break;
    }
    if (experiment == Experiment::SecondGeneration || experiment == Experiment::CrossGeneration ||
        experiment == Experiment::SiblingMatching) {
      if (parent_l < 1 || parent_l > parent_n) throw ContractError("parent_l must lie in [1, parent_n]");
      if (parent_n > cap) throw ContractError("parent_n exceeds lattice capacity");
    }
  }
};

/// Conditions worth a warning but not an error.
inline std::vector<std::string> config_warnings(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  for (std::size_t n : cfg.n_values) {
    if (static_cast<double>(n) <= cfg.profile.mean_minutiae) {
      std::ostringstream msg;
      msg << "N = " << n << " does not exceed the mean real template size " << cfg.profile.mean_minutiae
          << "; the scheme assumes N > M";
      out.push_back(msg.str());
    }
  }
  return out;
}

struct ReportRow {
  std::string experiment;
  std::size_t n = 0;
  std::size_t l = 0;
  std::optional<std::size_t> l2;
  double mean = 0.0;
  double std = 0.0;
  std::size_t trials = 0;

  double std_error() const { return trials ? std / std::sqrt(static_cast<double>(trials)) : 0.0; }

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

inline ReportRow summarize(std::string experiment, std::size_t n, std::size_t l, std::optional<std::size_t> l2,
                           const std::vector<double>& scores) {
  ReportRow r{std::move(experiment), n, l, l2, 0.0, 0.0, scores.size()};
  if (scores.empty()) throw ContractError("cannot summarize zero trials");
  double sum = 0.0;
  for (double s : scores) sum += s;
  r.mean = sum / static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - r.mean) * (s - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(scores.size()));
  return r;
}

namespace detail {

inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Scores of one finger, laid out [grid cell][trial].
using CellScores = std::vector<std::vector<double>>;

inline std::vector<ReportRow> reduce_cells(const std::string& label, const std::vector<CellScores>& per_unit,
                                           const std::vector<std::tuple<std::size_t, std::size_t, std::optional<std::size_t>>>& cells) {
  std::vector<ReportRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> all;
    for (const CellScores& u : per_unit) all.insert(all.end(), u[c].begin(), u[c].end());
    const auto& [n, l, l2] = cells[c];
    rows.push_back(summarize(label, n, l, l2, all));
  }
  return rows;
}

inline Template synthetic_for(const ExperimentConfig& cfg, std::size_t finger, std::size_t n, SeedRole role) {
  return synthesize(derive_seed(cfg.master_seed, finger, n, role), cfg.profile.width, cfg.profile.height, n);
}

inline std::vector<Template> impressions_of(const ExperimentConfig& cfg, std::size_t finger) {
  return simulate_impressions(cfg.master_seed, finger, cfg.impressions, cfg.profile, cfg.perturbation);
}

inline double score(const Template& a, const Template& b, const MatcherParams& p) {
  return static_cast<double>(match(a, b, p).score);
}

inline std::vector<std::tuple<std::size_t, std::size_t, std::optional<std::size_t>>> nl_cells(const ExperimentConfig& cfg) {
  std::vector<std::tuple<std::size_t, std::size_t, std::optional<std::size_t>>> cells;
  for (std::size_t n : cfg.n_values)
    for (std::size_t l : cfg.l_values) cells.emplace_back(n, l, std::nullopt);
  return cells;
}

inline std::vector<ReportRow> sorted(std::vector<ReportRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.experiment, a.n, a.l, a.l2) < std::tie(b.experiment, b.n, b.l, b.l2);
  });
  return rows;
}

// Verification templates of one finger for each impression, [n][l][impression].
using VtGrid = std::vector<std::vector<std::vector<Template>>>;

inline VtGrid first_generation(const ExperimentConfig& cfg, std::size_t finger, const std::vector<Template>& imps,
                               SeedRole role = SeedRole::Synthetic) {
  VtGrid grid(cfg.n_values.size(), std::vector<std::vector<Template>>(cfg.l_values.size()));
  for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
    const Template st = synthetic_for(cfg, finger, cfg.n_values[ni], role);
    const SpatialIndex index(st);
    for (std::size_t li = 0; li < cfg.l_values.size(); ++li) {
      for (const Template& rt : imps) grid[ni][li].push_back(construct_vt(rt, st, index, cfg.l_values[li]));
    }
  }
  return grid;
}

struct Lineage {
  std::vector<Template> parents;  // per impression
  VtGrid children;                // [n][l][impression]
};

inline Lineage second_generation(const ExperimentConfig& cfg, std::size_t finger) {
  const std::vector<Template> imps = impressions_of(cfg, finger);
  Lineage out;
  {
    const Template st = synthetic_for(cfg, finger, cfg.parent_n, SeedRole::Synthetic);
    const SpatialIndex index(st);
    for (const Template& rt : imps) out.parents.push_back(construct_vt(rt, st, index, cfg.parent_l));
  }
  out.children.assign(cfg.n_values.size(), std::vector<std::vector<Template>>(cfg.l_values.size()));
  for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
    const Template st = synthetic_for(cfg, finger, cfg.n_values[ni], SeedRole::SyntheticChild);
    const SpatialIndex index(st);
    for (std::size_t li = 0; li < cfg.l_values.size(); ++li) {
      for (const Template& p : out.parents) {
        out.children[ni][li].push_back(chain_generation(p, st, index, cfg.l_values[li]));
      }
    }
  }
  return out;
}

inline void genuine_pairs(const std::vector<Template>& vts, const MatcherParams& p, std::vector<double>& out) {
  for (std::size_t a = 0; a < vts.size(); ++a)
    for (std::size_t b = a + 1; b < vts.size(); ++b) out.push_back(score(vts[a], vts[b], p));
}

}  // namespace detail

/// Same-finger matching of verification templates built at equal (N, l);
/// every unordered impression pair of every finger is one trial.
inline std::vector<ReportRow> run_genuine_vt(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto cells = detail::nl_cells(cfg);
  std::vector<detail::CellScores> per_finger(cfg.fingers);
  detail::parallel_for(cfg.fingers, cfg.threads, [&](std::size_t f) {
    const auto imps = detail::impressions_of(cfg, f);
    const auto grid = detail::first_generation(cfg, f, imps);
    detail::CellScores cs(cells.size());
    for (std::size_t ni = 0, c = 0; ni < cfg.n_values.size(); ++ni)
      for (std::size_t li = 0; li < cfg.l_values.size(); ++li, ++c) detail::genuine_pairs(grid[ni][li], cfg.matcher, cs[c]);
    per_finger[f] = std::move(cs);
  });
  return detail::sorted(detail::reduce_cells("GenuineVt", per_finger, cells));
}

/// Every impression's real template against its own verification template.
inline std::vector<ReportRow> run_rt_vs_vt(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto cells = detail::nl_cells(cfg);
  std::vector<detail::CellScores> per_finger(cfg.fingers);
  detail::parallel_for(cfg.fingers, cfg.threads, [&](std::size_t f) {
    const auto imps = detail::impressions_of(cfg, f);
    const auto grid = detail::first_generation(cfg, f, imps);
    detail::CellScores cs(cells.size());
    for (std::size_t ni = 0, c = 0; ni < cfg.n_values.size(); ++ni)
      for (std::size_t li = 0; li < cfg.l_values.size(); ++li, ++c)
        for (std::size_t j = 0; j < imps.size(); ++j) cs[c].push_back(detail::score(imps[j], grid[ni][li][j], cfg.matcher));
    per_finger[f] = std::move(cs);
  });
  return detail::sorted(detail::reduce_cells("RtVsVt", per_finger, cells));
}

/// ImpostorVt: first impressions of every unordered pair of distinct fingers,
/// each transformed with its own ST. DiversityVt: a finger's first
/// impression transformed with two unrelated STs. Returns both row sets.
inline std::vector<ReportRow> run_impostor_and_diversity(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.fingers < 2) throw ContractError("impostor matching needs fingers >= 2");
  const auto cells = detail::nl_cells(cfg);
  std::vector<std::vector<Template>> first(cfg.fingers);  // [finger][cell]
  std::vector<detail::CellScores> diversity(cfg.fingers);
  detail::parallel_for(cfg.fingers, cfg.threads, [&](std::size_t f) {
    const std::vector<Template> imp0 = {detail::impressions_of(cfg, f).front()};
    const auto grid = detail::first_generation(cfg, f, imp0);
    const auto alt = detail::first_generation(cfg, f, imp0, SeedRole::SyntheticAlt);
    detail::CellScores cs(cells.size());
    for (std::size_t ni = 0, c = 0; ni < cfg.n_values.size(); ++ni) {
      for (std::size_t li = 0; li < cfg.l_values.size(); ++li, ++c) {
        first[f].push_back(grid[ni][li][0]);
        cs[c].push_back(detail::score(grid[ni][li][0], alt[ni][li][0], cfg.matcher));
      }
    }
    diversity[f] = std::move(cs);
  });

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < cfg.fingers; ++a)
    for (std::size_t b = a + 1; b < cfg.fingers; ++b) pairs.emplace_back(a, b);
  std::vector<detail::CellScores> impostor(pairs.size());
  detail::parallel_for(pairs.size(), cfg.threads, [&](std::size_t i) {
    const auto [a, b] = pairs[i];
    detail::CellScores cs(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) cs[c].push_back(detail::score(first[a][c], first[b][c], cfg.matcher));
    impostor[i] = std::move(cs);
  });

  auto rows = detail::reduce_cells("ImpostorVt", impostor, cells);
  auto div = detail::reduce_cells("DiversityVt", diversity, cells);
  rows.insert(rows.end(), div.begin(), div.end());
  return detail::sorted(std::move(rows));
}

/// Genuine matching among second-generation templates: first-generation
/// templates (parent_n, parent_l) re-transformed against a fresh per-finger
/// ST of each size in n_values, at each ordinal in l_values.
inline std::vector<ReportRow> run_second_generation(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto cells = detail::nl_cells(cfg);
  std::vector<detail::CellScores> per_finger(cfg.fingers);
  detail::parallel_for(cfg.fingers, cfg.threads, [&](std::size_t f) {
    const auto lineage = detail::second_generation(cfg, f);
    detail::CellScores cs(cells.size());
    for (std::size_t ni = 0, c = 0; ni < cfg.n_values.size(); ++ni)
      for (std::size_t li = 0; li < cfg.l_values.size(); ++li, ++c)
        detail::genuine_pairs(lineage.children[ni][li], cfg.matcher, cs[c]);
    per_finger[f] = std::move(cs);
  });
  return detail::sorted(detail::reduce_cells("SecondGeneration", per_finger, cells));
}

/// Parent (first-generation) against child (second-generation) templates of
/// the same impression. Rows carry l = parent_l, l2 = child ordinal.
inline std::vector<ReportRow> run_cross_generation(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::tuple<std::size_t, std::size_t, std::optional<std::size_t>>> cells;
  for (std::size_t n : cfg.n_values)
    for (std::size_t l : cfg.l_values) cells.emplace_back(n, cfg.parent_l, l);
  std::vector<detail::CellScores> per_finger(cfg.fingers);
  detail::parallel_for(cfg.fingers, cfg.threads, [&](std::size_t f) {
    const auto lineage = detail::second_generation(cfg, f);
    detail::CellScores cs(cells.size());
    for (std::size_t ni = 0, c = 0; ni < cfg.n_values.size(); ++ni)
      for (std::size_t li = 0; li < cfg.l_values.size(); ++li, ++c)
        for (std::size_t j = 0; j < lineage.parents.size(); ++j)
          cs[c].push_back(detail::score(lineage.parents[j], lineage.children[ni][li][j], cfg.matcher));
    per_finger[f] = std::move(cs);
  });
  return detail::sorted(detail::reduce_cells("CrossGeneration", per_finger, cells));
}

/// Second-generation templates of the same impression built from the same
/// ST at two different ordinals (l < l2).
inline std::vector<ReportRow> run_sibling_matching(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::size_t, std::size_t>> lpairs;  // indices into l_values
  for (std::size_t a = 0; a < cfg.l_values.size(); ++a)
    for (std::size_t b = 0; b < cfg.l_values.size(); ++b)
      if (cfg.l_values[a] < cfg.l_values[b]) lpairs.emplace_back(a, b);
  if (lpairs.empty()) throw ContractError("sibling matching needs at least two distinct ordinals");
  std::vector<std::tuple<std::size_t, std::size_t, std::optional<std::size_t>>> cells;
  for (std::size_t n : cfg.n_values)
    for (auto [a, b] : lpairs) cells.emplace_back(n, cfg.l_values[a], cfg.l_values[b]);
  std::vector<detail::CellScores> per_finger(cfg.fingers);
  detail::parallel_for(cfg.fingers, cfg.threads, [&](std::size_t f) {
    const auto lineage = detail::second_generation(cfg, f);
    detail::CellScores cs(cells.size());
    std::size_t c = 0;
    for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
      for (auto [a, b] : lpairs) {
        for (std::size_t j = 0; j < cfg.impressions; ++j) {
          cs[c].push_back(detail::score(lineage.children[ni][a][j], lineage.children[ni][b][j], cfg.matcher));
        }
        ++c;
      }
    }
    per_finger[f] = std::move(cs);
  });
  return detail::sorted(detail::reduce_cells("SiblingMatching", per_finger, cells));
}

/// Runs the experiment named in the config and returns only its rows.
inline std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::GenuineVt: return run_genuine_vt(cfg);
    case Experiment::RtVsVt: return run_rt_vs_vt(cfg);
    case Experiment::ImpostorVt:
    case Experiment::DiversityVt: {
      auto rows = run_impostor_and_diversity(cfg);
      const std::string label = to_string(cfg.experiment);
      std::erase_if(rows, [&](const ReportRow& r) { return r.experiment != label; });
      return rows;
    }
    case Experiment::SecondGeneration: return run_second_generation(cfg);
    case Experiment::CrossGeneration: return run_cross_generation(cfg);
    case Experiment::SiblingMatching: return run_sibling_matching(cfg);
  }
  return {};
}

// ---- reports ---------------------------------------------------------------

inline constexpr const char* kReportHeader = "experiment,n,l,l2,mean,std,trials";

inline std::string format_fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// CSV text: header, then rows sorted by (experiment, n, l, l2).
inline std::string report_csv(std::vector<ReportRow> rows) {
  rows = detail::sorted(std::move(rows));
  std::string out = kReportHeader;
  out += '\n';
  for (const ReportRow& r : rows) {
    out += r.experiment + ',' + std::to_string(r.n) + ',' + std::to_string(r.l) + ',' +
           (r.l2 ? std::to_string(*r.l2) : std::string()) + ',' + format_fixed4(r.mean) + ',' + format_fixed4(r.std) +
           ',' + std::to_string(r.trials) + '\n';
  }
  return out;
}

inline std::vector<ReportRow> parse_report(std::string_view csv) {
  std::vector<ReportRow> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < csv.size()) {
    std::size_t end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    std::string line(csv.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kReportHeader) throw ParseError(1, "unexpected report header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw ParseError(line_no, "expected 7 fields");
    try {
      ReportRow r;
      r.experiment = f[0];
      r.n = std::stoull(f[1]);
      r.l = std::stoull(f[2]);
      if (!f[3].empty()) r.l2 = std::stoull(f[3]);
      r.mean = std::stod(f[4]);
      r.std = std::stod(f[5]);
      r.trials = std::stoull(f[6]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "malformed number");
    }
  }
  if (line_no == 0) throw ParseError(1, "missing report header");
  return rows;
}

/// Writes `content` to `path` through a temporary file in the same
/// directory followed by a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move report into place at " + path.string());
  }
}

inline void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& destination) {
  write_file_atomic(destination, report_csv(rows));
}

// ---- config files ----------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::size_t> parse_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = trim(tok);
    if (tok.empty()) throw std::invalid_argument("empty list element");
    std::size_t used = 0;
    const unsigned long long x = std::stoull(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    out.push_back(x);
  }
  return out;
}

template <class T>
T parse_number(const std::string& v) {
  std::size_t used = 0;
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    out = static_cast<T>(std::stod(v, &used));
  } else if constexpr (std::is_signed_v<T>) {
    out = static_cast<T>(std::stoll(v, &used));
  } else {
    if (!v.empty() && v.front() == '-') throw std::invalid_argument(v);
    out = static_cast<T>(std::stoull(v, &used));
  }
  if (used != v.size()) throw std::invalid_argument(v);
  return out;
}

}  // namespace detail

/// Parses a flat `key = value` config. `#` starts a comment. Keys are the
/// ExperimentConfig field names; nested fields use a dot (`matcher.d_tol`).
/// `profile = <preset>` loads a preset before any `profile.*` override,
/// regardless of line order. Unknown or repeated keys are errors.
inline ExperimentConfig parse_config(std::string_view text) {
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string l = detail::trim(line);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    const std::string key = detail::trim(std::string_view(l).substr(0, eq));
    const std::string value = detail::trim(std::string_view(l).substr(eq + 1));
    if (!kv.emplace(key, std::make_pair(value, line_no)).second) throw ParseError(line_no, "duplicate key '" + key + "'");
  }

  ExperimentConfig cfg;
  if (auto it = kv.find("profile"); it != kv.end()) {
    try {
      cfg.profile = profile_by_name(it->second.first);
    } catch (const ContractError& e) {
      throw ParseError(it->second.second, e.what());
    }
    kv.erase(it);
  }

  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"master_seed", [&](const std::string& v) { cfg.master_seed = detail::parse_number<std::uint64_t>(v); }},
      {"fingers", [&](const std::string& v) { cfg.fingers = detail::parse_number<std::size_t>(v); }},
      {"impressions", [&](const std::string& v) { cfg.impressions = detail::parse_number<std::size_t>(v); }},
      {"profile.mean_minutiae", [&](const std::string& v) { cfg.profile.mean_minutiae = detail::parse_number<double>(v); }},
      {"profile.std_minutiae", [&](const std::string& v) { cfg.profile.std_minutiae = detail::parse_number<double>(v); }},
      {"profile.min_minutiae", [&](const std::string& v) { cfg.profile.min_minutiae = detail::parse_number<int>(v); }},
      {"profile.width", [&](const std::string& v) { cfg.profile.width = detail::parse_number<int>(v); }},
      {"profile.height", [&](const std::string& v) { cfg.profile.height = detail::parse_number<int>(v); }},
      {"profile.region_scale", [&](const std::string& v) { cfg.profile.region_scale = detail::parse_number<double>(v); }},
      {"perturbation.max_rotation", [&](const std::string& v) { cfg.perturbation.max_rotation = detail::parse_number<double>(v); }},
      {"perturbation.max_translation", [&](const std::string& v) { cfg.perturbation.max_translation = detail::parse_number<int>(v); }},
      {"perturbation.jitter_sigma", [&](const std::string& v) { cfg.perturbation.jitter_sigma = detail::parse_number<double>(v); }},
      {"perturbation.theta_jitter_sigma", [&](const std::string& v) { cfg.perturbation.theta_jitter_sigma = detail::parse_number<double>(v); }},
      {"perturbation.drop_prob", [&](const std::string& v) { cfg.perturbation.drop_prob = detail::parse_number<double>(v); }},
      {"perturbation.spurious_count_max", [&](const std::string& v) { cfg.perturbation.spurious_count_max = detail::parse_number<int>(v); }},
      {"n_values", [&](const std::string& v) { cfg.n_values = detail::parse_size_list(v); }},
      {"l_values", [&](const std::string& v) { cfg.l_values = detail::parse_size_list(v); }},
      {"matcher.d_tol", [&](const std::string& v) { cfg.matcher.d_tol = detail::parse_number<double>(v); }},
      {"matcher.beta_tol", [&](const std::string& v) { cfg.matcher.beta_tol = detail::parse_number<int>(v); }},
      {"matcher.d_max", [&](const std::string& v) {
         cfg.matcher.d_max = (v == "none") ? MatcherParams::kUncut : detail::parse_number<std::int64_t>(v);
       }},
      {"experiment", [&](const std::string& v) { cfg.experiment = experiment_from_string(v); }},
      {"parent_n", [&](const std::string& v) { cfg.parent_n = detail::parse_number<std::size_t>(v); }},
      {"parent_l", [&](const std::string& v) { cfg.parent_l = detail::parse_number<std::size_t>(v); }},
      {"threads", [&](const std::string& v) { cfg.threads = detail::parse_number<unsigned>(v); }},
  };

  for (const auto& [key, entry] : kv) {
    const auto& [value, line] = entry;
    auto it = setters.find(key);
    if (it == setters.end()) throw ParseError(line, "unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const ContractError& e) {
      throw ParseError(line, e.what());
    } catch (const std::logic_error&) {
      throw ParseError(line, "bad value '" + value + "' for " + key);
    }
  }
  return cfg;
}

}  // namespace cancelmin
