// smoosh: command-line front end for the simulations, coupling runs and
// acceptance checks.

#include <CLI11.hpp>

#include <iostream>

#include "smoosh/acceptance.hpp"
#include "smoosh/runner.hpp"

namespace {

struct CommonFlags {
  std::string config_file;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> replicas;
  std::optional<unsigned> threads;
  std::string out;
  bool print_config = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_file, "key=value config file");
  app->add_option("--preset", f.preset, "named preset (fig2, lattice, capture)");
  app->add_option("--set", f.overrides, "override a config key (key=value), repeatable");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--replicas", f.replicas, "number of replicas");
  app->add_option("--threads", f.threads, "worker threads (0 = all cores)");
  app->add_option("--out", f.out, "output directory (default $SMOOSH_OUT_DIR or ./smoosh_out)");
  app->add_flag("--print-config", f.print_config, "print the resolved configuration and exit");
}

// Precedence: defaults < preset < config file < --set < dedicated flags.
smoosh::ExperimentConfig resolve(const CommonFlags& f) {
  smoosh::ExperimentConfig c;
  if (!f.preset.empty()) smoosh::apply_preset(c, f.preset);
  if (!f.config_file.empty()) smoosh::load_config_file(c, f.config_file);
  for (const auto& kv : f.overrides) smoosh::apply_override(c, kv);
  if (f.seed) c.seed = *f.seed;
  if (f.replicas) c.replicas = *f.replicas;
  if (f.threads) c.threads = *f.threads;
  if (!f.out.empty()) c.out_dir = f.out;
  return c;
}

void report(const smoosh::RunManifest& m) {
  std::cout << "wrote " << m.doc["outputs"].size() << " artifact(s) and " << m.path.string() << "\n";
  if (m.failures() > 0) std::cout << m.failures() << " replica(s) failed; see manifest\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smoosh: gather-and-spread shuffling simulations"};
  app.require_subcommand(1);

  auto* constants = app.add_subcommand("constants", "print the bound report as JSON");
  double delta = 0.3, p = 0.5, sigma2 = 0.5, c1 = 0.0, alpha = -1.0;
  int m = 52;
  constants->add_option("--delta", delta, "palm radius on the unit table");
  constants->add_option("--p", p, "spread probability");
  constants->add_option("--sigma2", sigma2, "direction variance");
  constants->add_option("--m", m, "number of cards");
  constants->add_option("--c1", c1, "constant of the sqrt(m) term");
  constants->add_option("--alpha", alpha, "MGF argument (default frak_p / 2)");

  CommonFlags sim_flags, couple_flags, mix_flags;
  auto* simulate = app.add_subcommand("simulate", "run replicas and write artifacts");
  add_common(simulate, sim_flags);
  auto* couple = app.add_subcommand("couple", "run the shadow coupling and record stage times");
  add_common(couple, couple_flags);
  auto* mixing = app.add_subcommand("mixing-curve", "TV distance and P(tau > t) on a time grid");
  add_common(mixing, mix_flags);

  auto* verify = app.add_subcommand("verify", "run the acceptance checks");
  bool fast = false, as_json = false;
  std::vector<std::string> only;
  verify->add_flag("--fast", fast, "run the sub-minute subset");
  verify->add_flag("--json", as_json, "print a JSON table instead of text");
  verify->add_option("--only", only, "run only these ids (e.g. AC-2)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (constants->parsed()) {
      const double a = alpha >= 0.0 ? alpha : 0.5 * smoosh::frak_p(delta, p, sigma2);
      std::cout << smoosh::to_json(smoosh::bound_report(delta, p, sigma2, m, c1, a)).dump(2) << "\n";
      return 0;
    }
    auto run_with = [](const CommonFlags& f, auto&& fn) {
      const auto c = resolve(f);
      if (f.print_config) {
        std::cout << smoosh::config_to_text(c);
        return 0;
      }
      report(fn(c));
      return 0;
    };
    if (simulate->parsed()) return run_with(sim_flags, [](const auto& c) { return smoosh::run(c); });
    if (couple->parsed()) return run_with(couple_flags, [](const auto& c) { return smoosh::run_couple(c); });
    if (mixing->parsed()) return run_with(mix_flags, [](const auto& c) { return smoosh::run_mixing_curve(c); });
    if (verify->parsed()) {
      namespace ac = smoosh::acceptance;
      auto ids = !only.empty() ? only : fast ? ac::fast_ids() : ac::all_ids();
      nlohmann::json table = nlohmann::json::array();
      int failures = 0;
      for (const auto& id : ids) {
        const auto o = ac::run_check(id);
        failures += !o.pass;
        if (as_json)
          table.push_back({{"id", o.id}, {"pass", o.pass}, {"measured", o.measured},
                           {"tolerance", o.tolerance}, {"seconds", o.seconds}});
        else
          std::cout << ac::format_line(o) << std::endl;
      }
      if (as_json) std::cout << table.dump(2) << "\n";
      return failures ? 1 : 0;
    }
  } catch (const smoosh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
