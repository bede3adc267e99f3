#pragma once

// Command implementations behind the fragtree command-line tool. Each
// command takes a RunConfig, writes its files under config.out, prints a
// short report, and returns the process exit code:
//   0  success / statistical check passed
//   1  statistical check failed
//   2  usage or configuration error

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fragtree/fragtree.hpp"

namespace fragtree::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::string measure;  ///< path to a JSON spec, or inline JSON starting with '{'
  double alpha = -0.5;
  std::optional<std::uint64_t> seed;
  std::size_t n = 8;
  std::size_t k = 0;         ///< 0: same as n
  std::size_t replicas = 0;  ///< 0: command default
  double horizon = kInf;
  double death_tol = 1e-6;
  double mass_floor = 1e-6;
  double eps = 0.2;       ///< GRIND eps for constants / grind suite
  std::size_t N = 2;      ///< GRIND block count
  std::string out = ".";
  std::string trace;      ///< tree: read this trace instead of simulating
  bool homogeneous = false;
  bool full_mode = false;
  std::size_t threads = 1;
  double window_lo = 0.0;  ///< verify: regression window (0: suite default)
  double window_hi = 0.0;
};

inline DislocationMeasure resolve_measure(const std::string& spec) {
  if (spec.empty()) throw ValidationError("--measure is required");
  if (spec.front() == '{') return measure_from_string(spec);
  return load_measure(spec);
}

inline std::uint64_t require_seed(const RunConfig& c) {
  if (!c.seed) throw ValidationError("--seed is required (no implicit entropy)");
  return *c.seed;
}

inline void check_tolerances(const RunConfig& c) {
  if (!(c.death_tol > 0.0)) throw ValidationError("--death-tol must be positive");
  if (!(c.mass_floor > 0.0)) throw ValidationError("--mass-floor must be positive");
  if (!(c.eps > 0.0 && c.eps < 1.0)) throw ValidationError("--eps must lie in (0,1)");
}

inline std::filesystem::path out_dir(const RunConfig& c) {
  std::filesystem::path p(c.out);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string real17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + p.string());
  f << text;
}

/// Runs f(0..count-1) on up to `threads` workers; results come back in index order.
template <typename F>
auto parallel_map(std::size_t count, std::size_t threads, F f) -> std::vector<decltype(f(std::size_t{0}))> {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out(count);
  threads = std::max<std::size_t>(1, threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = f(i);
    return out;
  }
  std::vector<std::future<void>> workers;
  for (std::size_t w = 0; w < threads; ++w)
    workers.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < count; i += threads) out[i] = f(i);
    }));
  for (auto& w : workers) w.get();
  return out;
}

inline SimulationOptions options_of(const RunConfig& c) {
  SimulationOptions o;
  o.horizon = c.horizon;
  o.death_tol = c.death_tol;
  o.mass_floor = c.mass_floor;
  o.full_mode = c.full_mode;
  return o;
}

// ---------------------------------------------------------------------------
// simulate

inline int cmd_simulate(const RunConfig& c, std::ostream& log) {
  const auto m = std::make_shared<const DislocationMeasure>(resolve_measure(c.measure));
  const std::uint64_t seed = require_seed(c);
  check_tolerances(c);
  if (c.n < 1) throw ValidationError("--n must be at least 1");
  const std::size_t replicas = c.replicas == 0 ? 1 : c.replicas;
  std::unique_ptr<FragmentationSimulator> sim;
  if (c.homogeneous) {
    if (!std::isfinite(c.horizon) || !(c.horizon > 0.0))
      throw ValidationError("homogeneous simulation needs a finite --horizon");
    sim = std::make_unique<FragmentationSimulator>(m, 0.0, options_of(c));
  } else {
    if (!(c.alpha < 0.0)) throw ValidationError("--alpha must be negative");
    sim = std::make_unique<FragmentationSimulator>(m, c.alpha, options_of(c));
  }
  const auto dir = out_dir(c);
  auto texts = parallel_map(replicas, c.threads, [&](std::size_t r) {
    return trace_to_string(sim->run(c.n, seed + r));
  });
  for (std::size_t r = 0; r < replicas; ++r) {
    const auto path = dir / ("trace_" + std::to_string(seed + r) + ".txt");
    write_file(path, texts[r]);
    log << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// tree

inline int cmd_tree(const RunConfig& c, std::ostream& log) {
  check_tolerances(c);
  FragmentationTrace tr;
  std::uint64_t seed = 0;
  if (!c.trace.empty()) {
    tr = load_trace(c.trace);
    seed = tr.seed;
  } else {
    const auto m = std::make_shared<const DislocationMeasure>(resolve_measure(c.measure));
    seed = require_seed(c);
    if (!(c.alpha < 0.0)) throw ValidationError("--alpha must be negative");
    if (c.n < 1) throw ValidationError("--n must be at least 1");
    tr = FragmentationSimulator(m, c.alpha, options_of(c)).run(c.n, seed);
  }
  if (tr.homogeneous()) throw ValidationError("trees need a self-similar trace");
  const std::size_t k = c.k == 0 ? tr.n : c.k;
  const EdgeTree tree = build_marginal_tree(tr, k);
  Rng rng(seed, 0x0bde5ULL);
  const PlanarTree planar = randomize_orders(tree, rng);
  const HeightSample hs = leaf_positions(planar);
  const auto dir = out_dir(c);

  write_file(dir / "tree.nwk", to_newick(planar.tree) + "\n");
  write_file(dir / "tree.json", tree_to_json_string(planar.tree) + "\n");
  {
    std::ostringstream os;
    write_height_sample(os, hs);
    write_file(dir / "heights.tsv", os.str());
  }
  {
    double top = 0.0;
    for (const auto& p : hs.points) top = std::max(top, p.h);
    std::vector<double> levels;
    for (int i = 0; i < 20; ++i) levels.push_back(top * i / 20.0);
    std::ostringstream os;
    write_interval_snapshots(os, planar, levels);
    write_file(dir / "intervals.tsv", os.str());
  }
  if (k <= 500) {
    std::ostringstream os;
    os << "i,j,distance,D_i,D_j,D_ij\n";
    for (Label i = 1; i <= k; ++i)
      for (Label j = i + 1; j <= k; ++j)
        os << i << ',' << j << ',' << real17(tree.distance(i, j)) << ',' << real17(tr.death(i).value) << ','
           << real17(tr.death(j).value) << ',' << real17(tr.pair_death(i, j)) << '\n';
    write_file(dir / "distances.csv", os.str());
  }
  log << "R(" << k << "): " << tree.size() << " vertices, total length " << real17(tree.total_length())
      << "\nwrote tree.nwk tree.json heights.tsv intervals.tsv" << (k <= 500 ? " distances.csv" : "") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct SuiteResult {
  bool pass = false;
  std::string summary;
  std::string csv;
};

namespace detail {

inline std::vector<std::vector<double>> subordinator_samples(const RestrictedMeasure& rm,
                                                             const std::vector<double>& ts,
                                                             std::size_t replicas, std::uint64_t seed) {
  const double horizon = *std::max_element(ts.begin(), ts.end());
  std::vector<std::vector<double>> xi(ts.size(), std::vector<double>(replicas));
  for (std::size_t r = 0; r < replicas; ++r) {
    Rng rng(seed, r);
    const auto path = tagged_subordinator_path(rm, horizon, rng);
    for (std::size_t b = 0; b < ts.size(); ++b) xi[b][r] = path.value_at(ts[b]);
  }
  return xi;
}

inline SuiteResult laplace_suite(const LaplaceReport& rep, const std::string& name) {
  SuiteResult s;
  s.pass = rep.max_abs_z < 3.0;
  std::ostringstream csv;
  csv << "q,t,mean,target,se,z\n";
  for (const auto& cell : rep.cells)
    csv << cell.q << ',' << cell.t << ',' << real17(cell.mean) << ',' << real17(cell.target) << ','
        << real17(cell.se) << ',' << real17(cell.z) << '\n';
  s.csv = csv.str();
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s: max|z| = %.3f over %zu cells", name.c_str(), rep.max_abs_z, rep.cells.size());
  s.summary = buf;
  return s;
}

inline SuiteResult regression_suite(const RegressionReport& r, double target, double lo, double hi,
                                    const std::string& name) {
  SuiteResult s;
  s.pass = r.slope >= lo && r.slope <= hi;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s: slope %.4f (se %.4f, %zu points, window [%g, %g]); target %.4f, bracket [%.3f, %.3f]",
                name.c_str(), r.slope, r.stderr_slope, r.points, r.window_lo, r.window_hi, target, lo, hi);
  s.summary = buf;
  std::ostringstream csv;
  csv << "slope,intercept,se,window_lo,window_hi,points,target,bracket_lo,bracket_hi\n"
      << real17(r.slope) << ',' << real17(r.intercept) << ',' << real17(r.stderr_slope) << ','
      << real17(r.window_lo) << ',' << real17(r.window_hi) << ',' << r.points << ',' << real17(target) << ','
      << lo << ',' << hi << '\n';
  s.csv = csv.str();
  return s;
}

}  // namespace detail

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"laplace", "grind", "death", "dimension", "holder", "tail"};
  return names;
}

inline SuiteResult run_suite(const std::string& suite, const RunConfig& c) {
  const auto m = std::make_shared<const DislocationMeasure>(resolve_measure(c.measure));
  const std::uint64_t seed = require_seed(c);
  check_tolerances(c);
  const std::vector<double> qs{0.5, 1.0, 2.0}, ts{0.5, 1.0};

  if (suite == "laplace") {
    const RestrictedMeasure rm(m);
    const std::size_t R = c.replicas == 0 ? 100000 : c.replicas;
    const auto xi = detail::subordinator_samples(rm, ts, R, seed);
    const auto rep = laplace_check(xi, [&](double q) { return rm.tagged_exponent(q).value; }, qs, ts);
    return detail::laplace_suite(rep, "laplace");
  }
  if (suite == "grind") {
    const auto g = std::make_shared<const DislocationMeasure>(DislocationMeasure::truncated(*m, c.N, c.eps));
    const RestrictedMeasure rm(g);
    if (rm.drift() != 0.0) throw ConfigurationError("grind suite needs a finite base measure");
    const std::size_t R = c.replicas == 0 ? 100000 : c.replicas;
    const auto xi = detail::subordinator_samples(rm, ts, R, seed);
    const auto rep = laplace_check(xi, [&](double q) { return phi_xi(*m, c.N, c.eps, q).value; }, qs, ts);
    return detail::laplace_suite(rep, "grind");
  }
  if (suite == "death") {
    if (!(c.alpha < 0.0)) throw ValidationError("--alpha must be negative");
    FragmentationSimulator sim(m, c.alpha, options_of(c));
    const std::size_t R = c.replicas == 0 ? 100000 : c.replicas;
    auto d = parallel_map(R, c.threads, [&](std::size_t r) { return sim.run(1, seed + r).death(1).value; });
    const auto ms = stats::mean_se(d);
    const double target = 1.0 / sim.phi_abs_alpha();
    SuiteResult s;
    s.pass = std::abs(ms.mean - target) <= 0.01 * target + c.death_tol;
    char buf[200];
    std::snprintf(buf, sizeof buf, "death: mean D_1 %.5f (se %.5f) vs 1/Phi(|alpha|) = %.5f, tolerance %.5f",
                  ms.mean, ms.se, target, 0.01 * target + c.death_tol);
    s.summary = buf;
    s.csv = "mean,se,target,replicas\n" + real17(ms.mean) + "," + real17(ms.se) + "," + real17(target) + "," +
            std::to_string(R) + "\n";
    return s;
  }
  if (suite == "dimension") {
    if (!(c.alpha < 0.0)) throw ValidationError("--alpha must be negative");
    const std::size_t k = c.k == 0 ? 2000 : c.k;
    const auto tr = FragmentationSimulator(m, c.alpha, options_of(c)).run(k, seed);
    const auto tree = build_marginal_tree(tr, k);
    const double lo = c.window_lo > 0.0 ? c.window_lo : 0.02;
    const double hi = c.window_hi > 0.0 ? c.window_hi : 0.2;
    const auto table = covering_numbers(tree, log_grid(lo, hi, 12));
    const auto rep = dimension_estimate(table, lo, hi);
    const double target = 1.0 / std::abs(c.alpha);
    double blo = 0.85 * target, bhi = 1.15 * target;
    if (c.alpha == -0.5) blo = 1.7, bhi = 2.3;
    if (c.alpha == -1.0) blo = 0.8, bhi = 1.2;
    auto s = detail::regression_suite(rep, target, blo, bhi, "dimension");
    std::ostringstream csv;
    csv << "eps,N\n";
    for (const auto& row : table) csv << real17(row.eps) << ',' << row.count << '\n';
    s.csv += "\n" + csv.str();
    return s;
  }
  if (suite == "holder") {
    if (!(c.alpha < 0.0)) throw ValidationError("--alpha must be negative");
    const std::size_t k = c.k == 0 ? 10000 : c.k;
    const auto tr = FragmentationSimulator(m, c.alpha, options_of(c)).run(k, seed);
    Rng rng(seed, 0x0bde5ULL);
    const auto hs = leaf_positions(randomize_orders(build_marginal_tree(tr, k), rng));
    const double lo = c.window_lo > 0.0 ? c.window_lo : 10.0 / static_cast<double>(k);
    const double hi = c.window_hi > 0.0 ? c.window_hi : 0.1;
    const auto rep = holder_estimate(hs, log_grid(lo, hi, 15));
    const double target = std::min(constants(*m).theta_low, std::abs(c.alpha));
    return detail::regression_suite(rep, target, target - 0.15, target + 0.15, "holder");
  }
  if (suite == "tail") {
    if (m->family() != Family::StableTree) throw ConfigurationError("tail suite needs a stable-tree measure");
    const auto& st = std::get<StableTree>(m->variant());
    const std::size_t R = c.replicas == 0 ? 100000 : c.replicas;
    std::vector<double> x(R), w(R);
    for (std::size_t r = 0; r < R; ++r) {
      Rng rng(seed, r);
      const auto smp = sample_stable_split(st.beta, st.delta, rng);
      x[r] = 1.0 - smp.split[0];
      w[r] = smp.weight;
    }
    const double lo = c.window_lo > 0.0 ? c.window_lo : 1e-3;
    const double hi = c.window_hi > 0.0 ? c.window_hi : 1e-1;
    const auto rep = tail_exponent(x, w, lo, hi);
    const double target = 1.0 / st.beta - 1.0;
    return detail::regression_suite(rep, target, target - 0.1, target + 0.1, "tail");
  }
  throw ValidationError("unknown suite '" + suite + "'");
}

inline int cmd_verify(const std::string& suite, const RunConfig& c, std::ostream& log) {
  if (std::find(suite_names().begin(), suite_names().end(), suite) == suite_names().end())
    throw ValidationError("unknown suite '" + suite + "'");
  const SuiteResult s = run_suite(suite, c);
  write_file(out_dir(c) / ("verify_" + suite + ".csv"), s.csv);
  log << (s.pass ? "PASS " : "FAIL ") << s.summary << "\n";
  return s.pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// constants

inline int cmd_constants(const RunConfig& c, std::ostream& log) {
  const DislocationMeasure m = resolve_measure(c.measure);
  check_tolerances(c);
  std::ostringstream os;
  os << "quantity,q,value,error,divergent\n";
  auto row = [&](const std::string& name, const ExponentReport& r) {
    os << name << ',' << r.q << ',' << real17(r.value) << ',' << real17(r.error) << ',' << (r.divergent ? 1 : 0) << '\n';
  };
  for (double q : {0.0, 0.25, 0.5, 1.0, 2.0}) row("Phi", tagged_exponent(m, q));
  for (double q : {0.0, 0.5, 1.0, 2.0}) row("Phi_xi", phi_xi(m, c.N, c.eps, q));
  for (double q : {0.0, 0.5, 1.0, 2.0}) row("Phi_sigma", phi_sigma(m, c.N, c.eps, q).exponent);
  const auto k = phi_sigma(m, c.N, c.eps, 0.0);
  os << "killing_rate,," << real17(k.killing_rate) << ",,0\n";
  const auto cs = constants(m);
  os << "varrho,," << real17(cs.varrho) << ",,0\n";
  os << "A,," << real17(cs.A) << ",,0\n";
  os << "p_lower,," << real17(cs.p_lower) << ",,0\n";
  os << "theta_low,," << real17(cs.theta_low) << ",,0\n";
  os << "theta_up,," << real17(cs.theta_up) << ",,0\n";
  os << "# method: " << cs.method << (cs.finite_measure_convention ? "; theta set to 0 for a finite measure" : "")
     << "; N=" << c.N << " eps=" << c.eps << "\n";
  log << os.str();
  if (c.out != ".") write_file(out_dir(c) / "constants.csv", os.str());
  return kExitOk;
}

/// Runs `body`, mapping library exceptions to exit code 2.
template <typename F>
int guarded(std::ostream& err, F body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ConfigurationError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitUsage;
}

}  // namespace fragtree::cli
