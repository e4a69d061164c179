// cancelmin: command-line front end for synthesis, transformation, matching,
// simulation and evaluation.
//
// Exit status: 0 success, 1 domain error (bad template, bad config, I/O),
// 2 command-line usage error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "cancelmin/eval.hpp"
#include "cancelmin/knn.hpp"
#include "cancelmin/matcher.hpp"
#include "cancelmin/minutiae.hpp"
#include "cancelmin/simdata.hpp"
#include "cancelmin/synth.hpp"

namespace fs = std::filesystem;
using namespace cancelmin;

namespace {

// Matching does not depend on image size; templates read for `match` get
// bounds large enough for any sensor.
constexpr int kUnboundedSide = 1 << 20;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Template load(const fs::path& p, int width, int height, TemplateKind kind) {
  try {
    return parse_xyt(read_file(p), width, height, kind);
  } catch (const ParseError& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

struct SynthArgs {
  std::uint64_t seed = 0;
  int width = 640;
  int height = 480;
  std::uint64_t n = 0;
  std::string out;
};

struct TransformArgs {
  std::string rt;
  std::string st;
  std::optional<std::uint64_t> seed;
  int width = 640;
  int height = 480;
  std::optional<std::uint64_t> n;
  std::size_t l = 1;
  std::string out;
};

struct MatchArgs {
  std::string a, b;
  double d_tol = MatcherParams{}.d_tol;
  int beta_tol = MatcherParams{}.beta_tol;
  std::string d_max = "125";
};

struct SimulateArgs {
  std::uint64_t seed = 0;
  std::size_t fingers = 1;
  std::size_t impressions = 1;
  std::string profile = "fvc2004";
  std::string out_dir;
};

struct EvalArgs {
  std::string config;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const Template st = synthesize(a.seed, a.width, a.height, a.n);
  write_file_atomic(a.out, serialize_xyt(st));
  return 0;
}

int run_transform(const TransformArgs& a) {
  Template st;
  if (!a.st.empty()) {
    st = load(a.st, a.width, a.height, TemplateKind::Synthetic);
  } else {
    if (!a.seed || !a.n) throw CLI::ValidationError("transform", "give either --st or both --seed and -n");
    st = synthesize(*a.seed, a.width, a.height, *a.n);
  }
  const Template rt = load(a.rt, a.width, a.height, TemplateKind::Real);
  const Template vt = construct_vt(rt, st, a.l);
  if (const std::size_t hits = rt_vt_collisions(rt, vt); hits > 0) {
    std::cerr << "warning: " << hits << " real minutiae reproduced exactly in the verification template\n";
  }
  write_file_atomic(a.out, serialize_xyt(vt));
  return 0;
}

int run_match(const MatchArgs& a) {
  MatcherParams p;
  p.d_tol = a.d_tol;
  p.beta_tol = a.beta_tol;
  if (a.d_max == "none") {
    p.d_max = MatcherParams::kUncut;
  } else {
    const double px = std::stod(a.d_max);
    if (!(px > 0.0)) throw ContractError("--d-max must be positive or 'none'");
    p.d_max = static_cast<std::int64_t>(std::floor(px * px));
  }
  p.validate();
  const Template probe = load(a.a, kUnboundedSide, kUnboundedSide, TemplateKind::Real);
  const Template gallery = load(a.b, kUnboundedSide, kUnboundedSide, TemplateKind::Real);
  std::cout << match(probe, gallery, p).score << '\n';
  return 0;
}

int run_simulate(const SimulateArgs& a) {
  const FingerProfile profile = profile_by_name(a.profile);
  fs::create_directories(a.out_dir);
  for (std::size_t f = 0; f < a.fingers; ++f) {
    const auto imps = simulate_impressions(a.seed, f, a.impressions, profile, PerturbationModel{});
    for (std::size_t j = 0; j < imps.size(); ++j) {
      const fs::path p = fs::path(a.out_dir) / ("finger" + std::to_string(f) + "_imp" + std::to_string(j) + ".xyt");
      write_file_atomic(p, serialize_xyt(imps[j]));
    }
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config(read_file(a.config));
  } catch (const ParseError& e) {
    throw std::runtime_error(a.config + ": " + e.what());
  }
  for (const std::string& w : config_warnings(cfg)) std::cerr << "warning: " << w << '\n';
  std::cerr << "running " << to_string(cfg.experiment) << " (" << cfg.fingers << " fingers x " << cfg.impressions
            << " impressions)\n";
  const auto rows = run_experiment(cfg);
  write_report(rows, a.out);
  std::cerr << to_string(cfg.experiment) << ": " << rows.size() << " rows -> " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cancelable minutiae templates via k-nearest synthetic neighbors"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a seeded synthetic template");
  s->add_option("--seed", synth.seed, "Generator seed")->required();
  s->add_option("--width", synth.width, "Image width in pixels")->check(CLI::PositiveNumber);
  s->add_option("--height", synth.height, "Image height in pixels")->check(CLI::PositiveNumber);
  s->add_option("-n", synth.n, "Number of synthetic minutiae")->required();
  s->add_option("-o,--out", synth.out, "Output .xyt file")->required();

  TransformArgs tr;
  auto* t = app.add_subcommand("transform", "Build a verification template from a real template");
  t->add_option("--rt", tr.rt, "Real template (.xyt)")->required()->check(CLI::ExistingFile);
  auto* st_opt = t->add_option("--st", tr.st, "Synthetic template (.xyt)")->check(CLI::ExistingFile);
  auto* seed_opt = t->add_option("--seed", tr.seed, "Regenerate the synthetic template from this seed");
  t->add_option("--width", tr.width, "Image width in pixels")->check(CLI::PositiveNumber);
  t->add_option("--height", tr.height, "Image height in pixels")->check(CLI::PositiveNumber);
  auto* n_opt = t->add_option("-n", tr.n, "Synthetic template size (with --seed)");
  t->add_option("-l", tr.l, "Neighbor ordinal (1 = nearest)")->required()->check(CLI::PositiveNumber);
  t->add_option("-o,--out", tr.out, "Output .xyt file")->required();
  st_opt->excludes(seed_opt);
  st_opt->excludes(n_opt);
  seed_opt->needs(n_opt);
  n_opt->needs(seed_opt);

  MatchArgs ma;
  auto* m = app.add_subcommand("match", "Print the match score of two templates");
  m->add_option("a", ma.a, "Registered template (.xyt)")->required()->check(CLI::ExistingFile);
  m->add_option("b", ma.b, "Query template (.xyt)")->required()->check(CLI::ExistingFile);
  m->add_option("--d-tol", ma.d_tol, "Relative segment-length tolerance")->check(CLI::NonNegativeNumber);
  m->add_option("--beta-tol", ma.beta_tol, "Relative angle tolerance, degrees")->check(CLI::Range(0, 180));
  m->add_option("--d-max", ma.d_max, "Longest segment kept in comparison tables, pixels, or 'none'");

  SimulateArgs sim;
  auto* si = app.add_subcommand("simulate", "Write simulated finger impressions");
  si->add_option("--seed", sim.seed, "Master seed")->required();
  si->add_option("--fingers", sim.fingers, "Number of fingers")->check(CLI::PositiveNumber);
  si->add_option("--impressions", sim.impressions, "Impressions per finger")->check(CLI::PositiveNumber);
  si->add_option("--profile", sim.profile, "Finger profile")->check(CLI::IsMember({"fvc2004", "fvc2006", "polyu"}));
  si->add_option("-o,--out", sim.out_dir, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Run one experiment and write a CSV report");
  e->add_option("--config", ev.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  e->add_option("-o,--out", ev.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_transform(tr);
    if (*m) return run_match(ma);
    if (*si) return run_simulate(sim);
    if (*e) return run_eval(ev);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 2;
}
