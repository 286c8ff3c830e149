// Command-line front end: `simulate` runs seeded experiment sweeps to CSV or
// JSON, `inspect-family` prints the structural constants of a family spec.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmab/geometry.hpp"
#include "cmab/harness.hpp"
#include "cmab/serialize.hpp"

namespace {

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw CLI::ValidationError("empty list: " + csv);
  return out;
}

struct FamilyFlags {
  std::string kind = "uniform-matroid";
  int d = 8;
  int m = 3;
  int d0 = 2;
  std::string path;

  cmab::FamilySpec resolve() const {
    cmab::FamilySpec spec;
    spec.d = d;
    spec.m = m;
    spec.d0 = d0;
    spec.path = path;
    if (kind == "uniform-matroid") {
      spec.kind = cmab::FamilySpec::Kind::uniform_matroid;
    } else if (kind == "restricted") {
      spec.kind = cmab::FamilySpec::Kind::restricted;
    } else if (kind == "file") {
      spec.kind = cmab::FamilySpec::Kind::file;
      if (path.empty())
        throw CLI::ValidationError("--family file requires --family-file");
    } else {
      throw CLI::ValidationError("unknown family kind: " + kind);
    }
    return spec;
  }
};

void add_family_flags(CLI::App* app, FamilyFlags& flags) {
  app->add_option("--family", flags.kind,
                  "family kind: uniform-matroid | restricted | file")
      ->capture_default_str();
  app->add_option("--d", flags.d, "base-arm count (uniform-matroid)")
      ->capture_default_str();
  app->add_option("--m", flags.m, "arm size (uniform-matroid)")
      ->capture_default_str();
  app->add_option("--d0", flags.d0, "restricted-family size parameter")
      ->capture_default_str();
  app->add_option("--family-file", flags.path, "family/instance JSON path");
}

int run_simulate(const cmab::ExperimentConfig& cfg) {
  cmab::ExperimentOutcome outcome = cmab::run_experiment(cfg);
  for (const cmab::AlphaSummary& summary : outcome.summary.per_alpha) {
    const cmab::AggregateRow& last = summary.rows.back();
    std::printf(
        "alpha=%-5g t=%-6ld regret=%.4f (se %.4f)  mse_M=%.3e  max_err_M=%.4f "
        " pareto=%.4f\n",
        summary.alpha, last.t, last.mean.cum_regret, last.se.cum_regret,
        last.mean.mse_M, last.mean.max_err_M, last.mean.pareto_product);
  }
  if (!cfg.out_path.empty())
    std::printf("wrote %s\n", cfg.out_path.c_str());
  return 0;
}

int run_inspect(const cmab::LoadedFamily& loaded) {
  const cmab::SuperArmFamily& family = loaded.family;
  cmab::SpectralConstants constants = cmab::spectral_constants(family);
  std::vector<int> estimable = cmab::estimable_base_arms(family);
  std::printf("d            %d\n", family.d);
  std::printf("|M|          %zu\n", family.arms.size());
  if (family.uniform_size)
    std::printf("m            %d\n", *family.uniform_size);
  else
    std::printf("m            mixed\n");
  std::printf("rho_min      %.12g\n", constants.rho_min);
  std::printf("lambda_min   %.12g\n", constants.lambda_min);
  std::string arms;
  for (int e : estimable) arms += (arms.empty() ? "" : " ") + std::to_string(e + 1);
  std::printf("M_KL         {%s}\n", arms.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"combinatorial bandit experiment runner"};
  app.require_subcommand(1);

  cmab::ExperimentConfig cfg;
  FamilyFlags sim_family;
  std::string algo = "kl";
  std::string alpha_csv = "0.5";
  std::string format = "csv";
  std::string noise = "bernoulli";
  std::string mu_csv;

  CLI::App* sim = app.add_subcommand("simulate", "run a seeded experiment sweep");
  sim->add_option("--algo", algo, "kl | ucb")->required();
  add_family_flags(sim, sim_family);
  sim->add_option("--n", cfg.n, "horizon")->capture_default_str();
  sim->add_option("--alpha", alpha_csv, "exploration decay grid, e.g. 0,0.25,0.5,1")
      ->capture_default_str();
  sim->add_option("--trials", cfg.trials, "independent trials per alpha")
      ->capture_default_str();
  sim->add_option("--seed", cfg.seed, "base seed")->capture_default_str();
  sim->add_option("--out", cfg.out_path, "output file path");
  sim->add_option("--format", format, "csv | json")->capture_default_str();
  sim->add_flag("--fixed-instance", cfg.fixed_instance,
                "share one drawn instance across trials");
  sim->add_option("--mean-lo", cfg.means.lo, "lower mean bound")
      ->capture_default_str();
  sim->add_option("--mean-hi", cfg.means.hi, "upper mean bound")
      ->capture_default_str();
  sim->add_option("--mu", mu_csv, "explicit mean vector, comma separated");
  sim->add_option("--noise", noise, "bernoulli | uniform")->capture_default_str();
  sim->add_option("--threads", cfg.threads, "worker threads (0 = auto)")
      ->capture_default_str();

  FamilyFlags inspect_family;
  CLI::App* inspect =
      app.add_subcommand("inspect-family", "print family constants");
  add_family_flags(inspect, inspect_family);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      if (algo == "kl")
        cfg.algo = cmab::Algo::kl;
      else if (algo == "ucb")
        cfg.algo = cmab::Algo::ucb;
      else
        throw std::invalid_argument("unknown algo: " + algo);
      cfg.family = sim_family.resolve();
      cfg.alphas = parse_grid(alpha_csv);
      cfg.format = format == "json" ? cmab::ExperimentConfig::Format::json
                                    : cmab::ExperimentConfig::Format::csv;
      if (format != "csv" && format != "json")
        throw std::invalid_argument("unknown format: " + format);
      cfg.noise = cmab::noise_from_string(noise);
      if (!mu_csv.empty()) {
        std::vector<double> values = parse_grid(mu_csv);
        cfg.means.kind = cmab::MeanSpec::Kind::explicit_vec;
        cfg.means.values = Eigen::Map<Eigen::VectorXd>(
            values.data(), static_cast<Eigen::Index>(values.size()));
      }
      cmab::validate_config(cfg);
      // resolving the family exercises file loading and validation; failures
      // here are configuration problems, not run failures
      try {
        cmab::build_family(cfg.family);
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
      }
      return run_simulate(cfg);
    }
    cmab::LoadedFamily loaded;
    try {
      loaded = cmab::build_family(inspect_family.resolve());
    } catch (const CLI::Error&) {
      throw;
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
    return run_inspect(loaded);
  } catch (const CLI::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 3;
  }
}
