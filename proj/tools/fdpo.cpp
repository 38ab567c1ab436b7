// fdpo: command-line entrypoint.
//
//   fdpo pipeline --manifest M            stages 1-8, writes <out>/pipeline/
//   fdpo label    --manifest M [--mock]   judge every (record, slot); resumable
//   fdpo train    --manifest M [--dpo]    one run, writes <out>/train/
//   fdpo sweep    --manifest M            lambda sweep, writes <out>/sweep/
//   fdpo ablate   flip|remove-11|fraction --manifest M
//   fdpo report   --manifest M [DIR...]   table over every report.json found
//   fdpo generate toy|benchmark DIR       regenerate the bundled fixtures
//
// Exit codes: 0 success, 1 I/O, 2 schema, 3 insufficient bucket, 4 other
// runtime error, 64 usage.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "fdpo/app.hpp"

namespace {

std::vector<double> parse_csv_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CLI::ValidationError("--lambdas", "not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--lambdas", "empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  namespace app = fdpo::app;
  CLI::App cli{"Factuality-aware preference optimisation toolkit"};
  cli.require_subcommand(1);
  cli.fallthrough();

  std::string manifest_path;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  double lambda = 0, fraction = 1;
  std::string lambdas, out_dir;
  bool mock = false, no_flip = false, drop_11 = false, dpo = false;
  int verbosity = -1;

  auto* o_manifest = cli.add_option("--manifest", manifest_path, "Run manifest (JSON)");
  auto* o_seed = cli.add_option("--seed", seed, "Global seed");
  auto* o_jobs = cli.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  cli.add_flag("--mock", mock, "Use the offline mock judge");
  auto* o_lambda = cli.add_option("--lambda", lambda, "Factuality penalty");
  auto* o_lambdas = cli.add_option("--lambdas", lambdas, "Comma-separated lambda list for sweep");
  cli.add_flag("--no-flip", no_flip, "Disable label orientation during training");
  cli.add_flag("--drop-both-hallucinated", drop_11, "Remove (1,1) pairs before training");
  auto* o_fraction = cli.add_option("--fraction", fraction, "Training data fraction in (0,1]");
  auto* o_out = cli.add_option("--out", out_dir, "Output root (overrides the manifest's out_dir)");
  cli.add_option("--verbosity", verbosity, "0 quiet, 1 normal, 2 verbose");

  auto* c_pipeline = cli.add_subcommand("pipeline", "Run the data pipeline");
  auto* c_label = cli.add_subcommand("label", "Label responses with the judge");
  auto* c_train = cli.add_subcommand("train", "Train one policy");
  c_train->add_flag("--dpo", dpo, "Train the standard DPO baseline instead");
  auto* c_sweep = cli.add_subcommand("sweep", "Sweep lambda");
  auto* c_ablate = cli.add_subcommand("ablate", "Run an ablation");
  std::string ablation;
  c_ablate->add_option("kind", ablation, "flip | remove-11 | fraction")
      ->required()
      ->check(CLI::IsMember({"flip", "remove-11", "fraction"}));
  auto* c_report = cli.add_subcommand("report", "Render report tables");
  std::vector<std::string> report_dirs;
  c_report->add_option("dirs", report_dirs, "Run directories to scan (default: the manifest's out_dir)");
  auto* c_generate = cli.add_subcommand("generate", "Regenerate bundled fixtures");
  std::string gen_kind, gen_dir;
  c_generate->add_option("kind", gen_kind, "toy | benchmark")->required()->check(CLI::IsMember({"toy", "benchmark"}));
  c_generate->add_option("dir", gen_dir, "Output directory")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : app::kExitUsage;
  }

  try {
    if (c_generate->parsed()) {
      if (gen_kind == "toy") app::generate_toy(gen_dir, seed);
      else app::generate_benchmark(gen_dir, seed);
      return app::kExitOk;
    }
    if (o_manifest->count() == 0) {
      std::cerr << "error: --manifest is required\n";
      return app::kExitUsage;
    }
    auto m = fdpo::load_manifest(manifest_path);
    app::Overrides ov;
    if (o_seed->count()) ov.seed = seed;
    if (o_jobs->count()) ov.jobs = jobs;
    ov.mock = mock;
    if (o_lambda->count()) ov.lambda = lambda;
    if (o_lambdas->count()) ov.lambdas = parse_csv_doubles(lambdas);
    ov.no_flip = no_flip;
    ov.drop_both_hallucinated = drop_11;
    if (o_fraction->count()) ov.fraction = fraction;
    if (o_out->count()) ov.out = out_dir;
    app::apply_overrides(m, ov);
    app::Console con{verbosity >= 0 ? verbosity : m.verbosity};

    if (c_pipeline->parsed()) app::run_pipeline(m, con);
    else if (c_label->parsed()) app::run_label(m, mock, con);
    else if (c_train->parsed()) app::run_train(m, dpo, con);
    else if (c_sweep->parsed()) app::run_sweep(m, con);
    else if (c_ablate->parsed()) {
      if (ablation == "flip") app::run_ablate_flip(m, con);
      else if (ablation == "remove-11") app::run_ablate_remove_11(m, con);
      else app::run_ablate_fraction(m, ov.fraction, con);
    } else if (c_report->parsed()) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      app::run_report(m, dirs, con);
    }
    return app::kExitOk;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::kExitUsage;
  } catch (const fdpo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return app::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::kExitRuntime;
  }
}
