// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria (capped at 125), not counting those named with
// --known-failure=<id>; those still print FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cancelmin/eval.hpp"
#include "cancelmin/knn.hpp"
#include "cancelmin/matcher.hpp"
#include "cancelmin/synth.hpp"
#include "oracle.hpp"

using namespace cancelmin;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;
int known_failures = 0;
std::set<int> known;
double grid_seconds = 0.0;  // criteria 4-10

void report(int id, const std::string& title, const std::function<void(Outcome&)>& body, double limit_s,
            bool on_grid = false) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = seconds_since(t0);
  if (on_grid) grid_seconds += secs;
  if (limit_s > 0.0) o.require(secs < limit_s, "runtime over " + std::to_string(limit_s) + " s");
  const bool expected = known.count(id) > 0;
  if (!o.pass) ++(expected ? known_failures : failures);
  std::printf("criterion %2d: %s%s  %s (%.2f s) %s\n", id, o.pass ? "PASS" : "FAIL",
              !o.pass && expected ? " (known)" : "", title.c_str(), secs, o.detail.str().c_str());
  std::fflush(stdout);
}

const ReportRow& row(const std::vector<ReportRow>& rows, std::size_t n, std::size_t l,
                     std::optional<std::size_t> l2 = std::nullopt, const std::string& label = "") {
  for (const ReportRow& r : rows)
    if (r.n == n && r.l == l && r.l2 == l2 && (label.empty() || r.experiment == label)) return r;
  throw std::runtime_error("missing row n=" + std::to_string(n) + " l=" + std::to_string(l));
}

// Two means differ by at least k standard errors of their difference.
bool separated(const ReportRow& hi, const ReportRow& lo, double k = 2.0) {
  const double se = std::sqrt(hi.std_error() * hi.std_error() + lo.std_error() * lo.std_error());
  return hi.mean - lo.mean >= k * se;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

ExperimentConfig first_generation_grid() {
  ExperimentConfig cfg;
  cfg.master_seed = 1;
  cfg.fingers = 50;
  cfg.impressions = 4;
  cfg.profile = fvc2006_profile();
  cfg.n_values = {50, 100, 150, 200, 500, 2000};
  cfg.l_values = {1, 2, 3, 4, 5, 6};
  return cfg;
}

ExperimentConfig second_generation_grid() {
  ExperimentConfig cfg;
  cfg.master_seed = 1;
  cfg.fingers = 50;
  cfg.impressions = 4;
  cfg.profile = polyu_profile();
  cfg.n_values = {100, 175, 200, 500, 2000, 4000};
  cfg.l_values = {1, 6, 11, 16};
  cfg.parent_n = 1000;
  cfg.parent_l = 6;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    const std::string flag = "--known-failure=";
    if (a.rfind(flag, 0) == 0) {
      known.insert(std::stoi(a.substr(flag.size())));
    } else {
      std::fprintf(stderr, "usage: acceptance [--known-failure=<id>]...\n");
      return 2;
    }
  }
  report(1, "k-NN index equals brute force on 500 random instances", [](Outcome& o) {
    SeededGenerator g(0xA11CE);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const std::uint64_t n = 1 + g.next_uniform(4000);
      // every fifth instance on a tiny sensor, where distance ties are dense
      const int w = trial % 5 == 0 ? 16 : 640, h = trial % 5 == 0 ? 16 : 480;
      const Template st = synthesize(g.next_u64(), w, h, n);
      const Minutia q = draw_minutia(g, w, h);
      const std::size_t k = 1 + g.next_uniform(st.size());
      const NeighborResult got = query_knn(build_index(st), q, k);
      auto want = oracle::ranked(st, q);
      want.resize(k);
      bool same = got.neighbors.size() == k;
      for (std::size_t i = 0; same && i < k; ++i)
        same = got.neighbors[i].distance_sq == want[i].first && got.neighbors[i].st_index == want[i].second;
      mismatches += same ? 0 : 1;
    }
    o.detail << "mismatches=" << mismatches;
    o.require(mismatches == 0, "index disagrees with oracle");
  }, 10.0);

  report(2, "cancelability properties on 100 random (RT, ST, l)", [](Outcome& o) {
    SeededGenerator g(0xCA9CE1);
    std::size_t subset = 0, size_ok = 0, repeat = 0, revoked = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::uint64_t m = 2 + g.next_uniform(120);
      const Template rt = Template::create(draw_distinct_minutiae(g, 640, 480, m), 640, 480, TemplateKind::Real);
      const std::uint64_t n = 50 + g.next_uniform(2000);
      const std::size_t l = 1 + g.next_uniform(16);
      const std::uint64_t seed = g.next_u64();
      const Template st = synthesize(seed, 640, 480, n);
      const Template vt = construct_vt(rt, st, l);
      const std::set<Minutia> st_set(st.minutiae().begin(), st.minutiae().end());
      bool in = true;
      for (const Minutia& x : vt.minutiae()) in = in && st_set.count(x) > 0;
      subset += in;
      size_ok += vt.size() <= rt.size();
      repeat += construct_vt(rt, synthesize(seed, 640, 480, n), l) == vt;
      const Template other = construct_vt(rt, synthesize(seed + 1, 640, 480, n), l);
      const std::set<Minutia> a(vt.minutiae().begin(), vt.minutiae().end());
      const std::set<Minutia> b(other.minutiae().begin(), other.minutiae().end());
      revoked += a != b;
    }
    o.detail << "subset=" << subset << "/100 size=" << size_ok << "/100 deterministic=" << repeat
             << "/100 revoked=" << revoked << "/100";
    o.require(subset == 100, "VT not within ST");
    o.require(size_ok == 100, "|VT| > |RT|");
    o.require(repeat == 100, "rerun differs");
    o.require(revoked >= 99, "revocation below 99/100");
  }, 10.0);

  report(3, "self-match equals template size; greedy agrees with exhaustive search", [](Outcome& o) {
    SeededGenerator g(0x5E1F);
    std::size_t exact = 0, oracle_ok = 0, oracle_runs = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const std::uint64_t m = trial < 10 ? 2 + trial % 5 : 2 + g.next_uniform(59);
      const Template t = Template::create(draw_distinct_minutiae(g, 640, 480, m), 640, 480, TemplateKind::Real);
      const MatcherParams p = MatcherParams::uncut();
      exact += match(t, t, p).score == m;
      if (m <= 6) {
        ++oracle_runs;
        oracle_ok += oracle::best_web(build_compat(build_ct(t, p), build_ct(t, p), p)) == m;
      }
    }
    o.detail << "self=" << exact << "/50 oracle=" << oracle_ok << "/" << oracle_runs;
    o.require(exact == 50, "self-match below |T|");
    o.require(oracle_ok == oracle_runs, "exhaustive search disagrees");
  }, 60.0);

  const auto grid_t0 = Clock::now();
  std::vector<ReportRow> genuine;
  report(4, "genuine VT score peaks at interior N (N=150 vs 50 and 2000)", [&](Outcome& o) {
    genuine = run_genuine_vt(first_generation_grid());
    for (std::size_t l = 1; l <= 6; ++l) {
      const ReportRow& a = row(genuine, 50, l);
      const ReportRow& b = row(genuine, 150, l);
      const ReportRow& c = row(genuine, 2000, l);
      o.detail << " l" << l << ":" << fmt(a.mean) << "<" << fmt(b.mean) << ">" << fmt(c.mean);
      o.require(b.mean > a.mean, "N=150 not above N=50 at l=" + std::to_string(l));
      o.require(separated(b, c), "N=150 not 2 SE above N=2000 at l=" + std::to_string(l));
    }
  }, 300.0, true);

  report(5, "larger ordinal helps at N=100 (l=6 vs l=1)", [&](Outcome& o) {
    const ReportRow& a = row(genuine, 100, 1);
    const ReportRow& b = row(genuine, 100, 6);
    o.detail << "l1=" << fmt(a.mean) << "+-" << fmt(a.std_error()) << " l6=" << fmt(b.mean) << "+-"
             << fmt(b.std_error());
    o.require(separated(b, a), "l=6 not 2 SE above l=1");
  }, 0.0, true);

  report(6, "RT vs own VT below 0.1 x genuine at N=200", [&](Outcome& o) {
    ExperimentConfig cfg = first_generation_grid();
    cfg.experiment = Experiment::RtVsVt;
    cfg.n_values = {200};
    const auto rows = run_rt_vs_vt(cfg);
    for (std::size_t l = 1; l <= 6; ++l) {
      const double rv = row(rows, 200, l).mean, gv = row(genuine, 200, l).mean;
      o.detail << " l" << l << ":" << fmt(rv) << "/" << fmt(gv) << "=" << fmt(rv / gv);
      o.require(rv < 0.1 * gv, "ratio at l=" + std::to_string(l));
    }
  }, 0.0, true);

  report(7, "different-ST matching indistinguishable from impostor at (200, 1)", [&](Outcome& o) {
    ExperimentConfig cfg = first_generation_grid();
    cfg.experiment = Experiment::ImpostorVt;
    cfg.n_values = {200};
    cfg.l_values = {1};
    const auto rows = run_impostor_and_diversity(cfg);
    const ReportRow& imp = row(rows, 200, 1, std::nullopt, "ImpostorVt");
    const ReportRow& div = row(rows, 200, 1, std::nullopt, "DiversityVt");
    const double gv = row(genuine, 200, 1).mean;
    const double se = std::sqrt(imp.std_error() * imp.std_error() + div.std_error() * div.std_error());
    o.detail << "impostor=" << fmt(imp.mean) << " diversity=" << fmt(div.mean) << " 2SE=" << fmt(2 * se)
             << " genuine=" << fmt(gv);
    o.require(std::abs(imp.mean - div.mean) <= 2 * se, "diversity differs from impostor by more than 2 SE");
    o.require(imp.mean < 0.2 * gv && div.mean < 0.2 * gv, "not below 0.2 x genuine");
  }, 0.0, true);

  std::vector<ReportRow> second;
  report(8, "second-generation genuine score peaks near N=175", [&](Outcome& o) {
    ExperimentConfig cfg = second_generation_grid();
    cfg.experiment = Experiment::SecondGeneration;
    second = run_second_generation(cfg);
    for (std::size_t l : {1, 6, 11, 16}) {
      const double a = row(second, 100, l).mean, b = row(second, 175, l).mean, c = row(second, 4000, l).mean;
      o.detail << " l" << l << ":" << fmt(a) << "<" << fmt(b) << ">" << fmt(c);
      o.require(b > a && b > c, "no interior maximum at l=" + std::to_string(l));
    }
  }, 0.0, true);

  report(9, "cross-generation matching suppressed; p6c1 rises with N", [&](Outcome& o) {
    ExperimentConfig cfg = second_generation_grid();
    cfg.experiment = Experiment::CrossGeneration;
    const auto cross = run_cross_generation(cfg);
    double worst = 0.0;
    for (std::size_t n : cfg.n_values) {
      if (n > 2000) continue;
      for (std::size_t l : {6, 11, 16}) {
        const double r = row(cross, n, 6, l).mean / row(second, n, l).mean;
        worst = std::max(worst, r);
        o.require(r < 0.1, "ratio " + fmt(r) + " at N=" + std::to_string(n) + " c" + std::to_string(l));
      }
    }
    const double lo = row(cross, 100, 6, 1).mean, hi = row(cross, 4000, 6, 1).mean;
    o.detail << "worst ratio=" << fmt(worst) << " p6c1: N=100 " << fmt(lo) << " -> N=4000 " << fmt(hi);
    o.require(hi > lo, "p6c1 not larger at the top of the grid");
  }, 0.0, true);

  report(10, "some sibling pair at N=200 links above impostor by 2 SE", [&](Outcome& o) {
    ExperimentConfig cfg = second_generation_grid();
    cfg.experiment = Experiment::SiblingMatching;
    cfg.n_values = {200};
    const auto sib = run_sibling_matching(cfg);
    cfg.experiment = Experiment::ImpostorVt;
    const auto imp_rows = run_impostor_and_diversity(cfg);
    const ReportRow* imp = nullptr;
    for (const ReportRow& r : imp_rows)
      if (r.experiment == "ImpostorVt" && (!imp || r.mean > imp->mean)) imp = &r;
    std::size_t linked = 0;
    const ReportRow* best = nullptr;
    for (const ReportRow& r : sib) {
      linked += separated(r, *imp);
      if (!best || r.mean > best->mean) best = &r;
    }
    o.detail << "impostor max=" << fmt(imp->mean) << " best sibling l" << best->l << "/l" << *best->l2 << "="
             << fmt(best->mean) << " linked pairs=" << linked << "/" << sib.size();
    o.require(linked >= 1, "no sibling pair separated from impostor");
  }, 0.0, true);
  grid_seconds = seconds_since(grid_t0);

  report(11, "eval rerun gives byte-identical CSV", [](Outcome& o) {
    ExperimentConfig cfg = first_generation_grid();
    cfg.fingers = 10;
    cfg.n_values = {100, 200};
    std::string first;
    for (Experiment e : {Experiment::GenuineVt, Experiment::RtVsVt, Experiment::ImpostorVt, Experiment::DiversityVt}) {
      cfg.experiment = e;
      first += report_csv(run_experiment(cfg));
    }
    std::string again;
    for (Experiment e : {Experiment::GenuineVt, Experiment::RtVsVt, Experiment::ImpostorVt, Experiment::DiversityVt}) {
      cfg.experiment = e;
      cfg.threads = cfg.threads == 1 ? 3 : 1;  // thread count must not matter
      again += report_csv(run_experiment(cfg));
    }
    o.detail << "bytes=" << first.size();
    o.require(first == again, "CSV differs on rerun");
  }, 0.0);

  report(12, "performance envelope", [](Outcome& o) {
    SeededGenerator g(0x60);
    double worst_ms = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Template a = Template::create(draw_distinct_minutiae(g, 640, 480, 60), 640, 480, TemplateKind::Real);
      const Template b = Template::create(draw_distinct_minutiae(g, 640, 480, 60), 640, 480, TemplateKind::Real);
      const auto t0 = Clock::now();
      (void)match(a, b);
      (void)match(a, a);
      worst_ms = std::max(worst_ms, seconds_since(t0) * 1000.0 / 2.0);
    }
    o.detail << "grid(4-10)=" << fmt(grid_seconds) << " s, worst 60x60 match=" << fmt(worst_ms) << " ms";
    o.require(grid_seconds < 900.0, "grid over 15 min");
    o.require(worst_ms < 50.0, "single match over 50 ms");
  }, 0.0);

  std::printf("%d of 12 criteria failed (%d known)\n", failures + known_failures, known_failures);
  return failures > 125 ? 125 : failures;
}
