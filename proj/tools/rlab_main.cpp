// command line front end: train one model, run one recourse method against a
// saved model, run the full epsilon sweep, re-check bounds, or rebuild plot
// data from an existing results file.
#include <CLI11.hpp>
#include <bit>
#include <fstream>
#include <iostream>
#include <optional>

#include "rlab/harness.hpp"
#include "rlab/rng.hpp"

namespace {

using namespace rlab;

experiment_config load_or_default(const std::string& path) {
  if (path.empty()) return experiment_config{};
  return load_config_file(path);
}

int cmd_train(const std::string& config_path, const std::string& family,
              double epsilon, std::uint64_t seed, const std::string& out,
              const std::string& runlog_path) {
  experiment_config cfg = load_or_default(config_path);
  if (!family.empty()) cfg.family = family;
  validate_config(cfg, /*allow_vae_family=*/true);
  if (epsilon < 0.0) throw config_error("--epsilon must be >= 0");

  dataset full = build_dataset(cfg);
  auto [train, test] = split(full, cfg.test_fraction, seed);

  std::ofstream runlog_file;
  std::ostream* runlog = nullptr;
  if (!runlog_path.empty()) {
    runlog_file.open(runlog_path);
    if (!runlog_file) throw io_error("cannot write runlog: " + runlog_path);
    runlog = &runlog_file;
  }

  model_variant m;
  if (cfg.family == "vae") {
    m = train_vae(train, cfg.vae_latent, cfg.vae_epochs, cfg.vae_learning_rate,
                  seed, 0.2, runlog);
  } else if (cfg.family == "ntk") {
    m = train_ntk(train.X, train.y, cfg.ntk_beta, epsilon);
  } else {
    train_config tc;
    tc.epochs = cfg.epochs;
    tc.learning_rate = cfg.learning_rate;
    tc.eps_train = epsilon;
    tc.seed = seed;
    tc.pgd_steps = cfg.pgd_steps;
    tc.pgd_step_size = cfg.pgd_step_size;
    if (cfg.family == "linear") m = train_linear(train, tc, runlog);
    else m = train_mlp(train, tc, cfg.depth, cfg.width, runlog);
  }
  save_model_file(out, m);
  std::cout << "trained " << cfg.family << " on " << train.n() << " rows (eps "
            << gshort(epsilon) << ", seed " << seed << ") -> " << out << "\n";
  if (cfg.family != "vae") {
    const predictor& p = as_predictor(m);
    int correct = 0;
    for (int i = 0; i < test.n(); ++i)
      if (label_of(p.score(test.X.row(i).transpose())) ==
          static_cast<int>(test.y(i)))
        ++correct;
    std::cout << "test accuracy " << g17(double(correct) / double(test.n()))
              << "\n";
  }
  return 0;
}

int cmd_recourse(const std::string& config_path, const std::string& model_path,
                 const std::string& method_str, const std::string& vae_path,
                 std::uint64_t seed, const std::string& out) {
  experiment_config cfg = load_or_default(config_path);
  validate_config(cfg);
  method_kind method = method_from_name(method_str);

  model_variant mv = load_model_file(model_path);
  if (std::holds_alternative<vae_model>(mv))
    throw config_error("recourse needs a classifier model, not an autoencoder");
  const predictor& m = as_predictor(mv);

  std::optional<vae_model> vae;
  if (!vae_path.empty()) {
    model_variant vv = load_model_file(vae_path);
    if (!std::holds_alternative<vae_model>(vv))
      throw config_error("--vae must point at an autoencoder model file");
    vae = std::get<vae_model>(std::move(vv));
  }

  dataset full = build_dataset(cfg);
  auto [train, test] = split(full, cfg.test_fraction, seed);
  (void)train;
  double eps = m.eps_train();
  auto outcomes =
      run_method(cfg, m, vae ? &*vae : nullptr, test, eps, seed, method);

  std::ofstream os(out);
  if (!os) throw io_error("cannot write file: " + out);
  os << "instance_id,method,epsilon_train,valid,cost,iterations,"
        "budget_exhausted,latent_radius\n";
  for (const auto& [idx, o] : outcomes)
    os << "s" << seed << "-e" << gshort(eps) << "-i" << idx << ','
       << method_name(o.method) << ',' << g17(eps) << ',' << (o.valid ? 1 : 0)
       << ',' << g17(o.cost) << ',' << o.iterations << ','
       << (o.budget_exhausted ? 1 : 0) << ',' << g17(o.latent_radius) << '\n';
  if (!os) throw io_error("error writing file: " + out);

  int valid = 0;
  for (const auto& [idx, o] : outcomes)
    if (o.valid) ++valid;
  std::cout << "attempted " << outcomes.size() << " instances, " << valid
            << " valid -> " << out << "\n";
  return 0;
}

int cmd_report_totals(const sweep_report& rep) {
  int viol = 0, vac = 0, holds = 0;
  for (const auto& b : rep.bounds) {
    if (!b.interval.contained && !b.interval.vacuous) ++viol;
    if (b.interval.vacuous) ++vac;
  }
  for (const auto& q : rep.conditions)
    if (q.condition.holds) ++holds;
  std::cout << "bounds " << rep.bounds.size() << " violations " << viol
            << " vacuous " << vac << " conditions " << rep.conditions.size()
            << " holds " << holds << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust-model recourse laboratory"};
  app.require_subcommand(1);

  std::string config_path, family, model_path, vae_path, method_str = "scfe";
  std::string out = "model.txt", out_dir, runlog_path, results_path;
  double epsilon = 0.0;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train one model and save it");
  train->add_option("--config", config_path, "json experiment config");
  train->add_option("--family", family, "linear | mlp | ntk | vae");
  train->add_option("--epsilon", epsilon, "training perturbation budget");
  train->add_option("--seed", seed, "split / initialization seed");
  train->add_option("--out", out, "model file to write");
  train->add_option("--runlog", runlog_path, "per-epoch loss log");

  auto* rec = app.add_subcommand(
      "recourse", "run one recourse method over the negative test instances");
  rec->add_option("--config", config_path, "json experiment config");
  rec->add_option("--model", model_path, "trained model file")->required();
  rec->add_option("--method", method_str, "scfe | gsm | cchvae");
  rec->add_option("--vae", vae_path, "autoencoder model file (cchvae)");
  rec->add_option("--seed", seed, "split seed, must match training");
  rec->add_option("--out", out, "outcome csv to write");

  auto* sweep = app.add_subcommand(
      "sweep", "train across the epsilon grid and emit the full report");
  sweep->add_option("--config", config_path, "json experiment config");
  std::string sw_family;
  std::vector<double> sw_grid;
  std::vector<std::uint64_t> sw_seeds;
  std::vector<std::string> sw_methods;
  int sw_epochs = -1, sw_max_instances = -1, sw_depth = -1, sw_width = -1;
  double sw_lr = -1.0;
  sweep->add_option("--family", sw_family, "override model family");
  sweep->add_option("--epsilon-grid", sw_grid, "override epsilon grid");
  sweep->add_option("--seeds", sw_seeds, "override seed list");
  sweep->add_option("--methods", sw_methods, "override method list");
  sweep->add_option("--epochs", sw_epochs, "override training epochs");
  sweep->add_option("--learning-rate", sw_lr, "override learning rate");
  sweep->add_option("--depth", sw_depth, "override mlp depth");
  sweep->add_option("--width", sw_width, "override mlp width");
  sweep->add_option("--max-instances", sw_max_instances,
                    "cap recourse instances per cell");
  sweep->add_option("--out-dir", out_dir, "report directory");

  auto* verify = app.add_subcommand(
      "verify-bounds", "run the sweep and emit only the bound check files");
  verify->add_option("--config", config_path, "json experiment config");
  verify->add_option("--out-dir", out_dir, "output directory");

  auto* report = app.add_subcommand(
      "report", "rebuild plot data from an existing results csv");
  report->add_option("--results", results_path, "results.csv path")->required();
  report->add_option("--out-dir", out_dir, "plot data directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(config_path, family, epsilon, seed, out, runlog_path);
    if (rec->parsed())
      return cmd_recourse(config_path, model_path, method_str, vae_path, seed,
                          out);
    if (sweep->parsed()) {
      rlab::experiment_config cfg = load_or_default(config_path);
      if (!sw_family.empty()) cfg.family = sw_family;
      if (!sw_grid.empty()) cfg.epsilon_grid = sw_grid;
      if (!sw_seeds.empty()) cfg.seeds = sw_seeds;
      if (!sw_methods.empty()) {
        cfg.methods.clear();
        for (const auto& s : sw_methods)
          cfg.methods.push_back(rlab::method_from_name(s));
      }
      if (sw_epochs >= 0) cfg.epochs = sw_epochs;
      if (sw_lr >= 0.0) cfg.learning_rate = sw_lr;
      if (sw_depth >= 0) cfg.depth = sw_depth;
      if (sw_width >= 0) cfg.width = sw_width;
      if (sw_max_instances >= 0) cfg.max_recourse_instances = sw_max_instances;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      rlab::sweep_report rep = rlab::run_sweep(cfg);
      rlab::emit_report(rep, rep.config.output_dir);
      std::cout << "rows " << rep.rows.size() << " -> "
                << rep.config.output_dir << "\n";
      return cmd_report_totals(rep);
    }
    if (verify->parsed()) {
      rlab::experiment_config cfg = load_or_default(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      rlab::sweep_report rep = rlab::run_sweep(cfg);
      rlab::emit_bounds(rep, rep.config.output_dir);
      // bound violations are findings, not failures: the exit code only
      // reflects whether the run itself completed
      return cmd_report_totals(rep);
    }
    if (report->parsed()) {
      auto rows = rlab::read_results_csv(results_path);
      rlab::emit_plotdata(rows, out_dir + "/plotdata");
      std::cout << "rows " << rows.size() << " -> " << out_dir
                << "/plotdata\n";
      return 0;
    }
  } catch (const rlab::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
