// fragtree: simulate self-similar fragmentations, build their genealogical
// trees and height functions, and run statistical checks.
//
//   fragtree simulate  --measure m.json --alpha -0.5 --n 8 --seed 1 --out runs/
//   fragtree tree      --measure m.json --alpha -0.5 --n 8 --seed 1 --out tree/
//   fragtree verify laplace --measure m.json --seed 1
//   fragtree constants --measure m.json
//
// Options may also come from a TOML/INI file given with --config, under a
// section named after the subcommand ([simulate], [tree], ...). Flags on the
// command line take precedence.

#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>

#include "fragtree/cli.hpp"

namespace {

void add_common(CLI::App* sub, fragtree::cli::RunConfig& c) {
  sub->fallthrough();
  sub->add_option("--measure", c.measure, "measure spec file (or inline JSON)");
  sub->add_option("--alpha", c.alpha, "self-similarity index (< 0)");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--n", c.n, "number of tagged labels");
  sub->add_option("--k", c.k, "number of leaves (default n)");
  sub->add_option("--replicas", c.replicas, "number of replicas");
  sub->add_option("--horizon", c.horizon, "simulation horizon");
  sub->add_option("--death-tol", c.death_tol, "death-time truncation tolerance");
  sub->add_option("--mass-floor", c.mass_floor, "mass floor for full-mode traces");
  sub->add_option("--eps", c.eps, "GRIND eps");
  sub->add_option("--N", c.N, "GRIND block count");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--threads", c.threads, "worker threads for replicas");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fragtree::cli;
  CLI::App app{"fragtree: self-similar fragmentations and their genealogies"};
  app.set_config("--config", "", "TOML/INI file; a [<subcommand>] section holds its options");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  RunConfig cfg;
  std::string suite;

  auto* sim = app.add_subcommand("simulate", "write trace files");
  add_common(sim, cfg);
  sim->add_flag("--homogeneous", cfg.homogeneous, "homogeneous (alpha = 0) up to --horizon");
  sim->add_flag("--full", cfg.full_mode, "keep untagged fragments above the mass floor");

  auto* tree = app.add_subcommand("tree", "build R(k), height sample and interval snapshots");
  add_common(tree, cfg);
  tree->add_option("--trace", cfg.trace, "existing trace file");

  auto* verify = app.add_subcommand("verify", "run a statistical check suite");
  add_common(verify, cfg);
  verify->add_option("suite", suite, "laplace | grind | death | dimension | holder | tail")->required();
  verify->add_option("--window-lo", cfg.window_lo, "regression window lower end");
  verify->add_option("--window-hi", cfg.window_hi, "regression window upper end");

  auto* cons = app.add_subcommand("constants", "print exponents and constants of a measure");
  add_common(cons, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  return guarded(std::cerr, [&] {
    if (*sim) return cmd_simulate(cfg, std::cout);
    if (*tree) return cmd_tree(cfg, std::cout);
    if (*verify) return cmd_verify(suite, cfg, std::cout);
    return cmd_constants(cfg, std::cout);
  });
}
