#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlab/bounds.hpp"
#include "rlab/dataset.hpp"
#include "rlab/recourse.hpp"
#include "rlab/train.hpp"

namespace rlab {

inline constexpr const char* k_tool_version = "1.0.0";

struct experiment_config {
  // dataset
  std::string source = "blobs";  // blobs | factor | csv
  synthetic_spec blobs;
  factor_spec factor;
  std::string csv_path;
  std::vector<column_schema> csv_columns;
  std::string dataset_name;  // report label; empty -> the builder's own name
  double test_fraction = 0.25;

  // model
  std::string family = "linear";  // linear | mlp | ntk (train subcommand also: vae)
  int depth = 1;
  int width = 16;

  // sweep
  std::vector<double> epsilon_grid = {0.0, 0.02, 0.05, 0.10,
                                      0.15, 0.20, 0.25, 0.3};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<method_kind> methods = {method_kind::scfe, method_kind::gsm,
                                      method_kind::cchvae};
  int max_recourse_instances = 0;  // 0 = every eligible test instance

  // training; 0 picks the family default (linear 3000/0.01, mlp 2000/0.2)
  int epochs = 0;
  double learning_rate = 0.0;
  int pgd_steps = 10;
  double pgd_step_size = 0.0;
  double ntk_beta = 0.1;

  // autoencoder backing the cchvae method
  int vae_latent = 0;  // 0 -> max(2, d/2)
  int vae_epochs = 8000;
  double vae_learning_rate = 0.01;

  scfe_params scfe;
  gsm_params gsm;
  cchvae_params cchvae;

  std::string output_dir = "out";
};

experiment_config load_config_file(const std::string& path);
experiment_config parse_config_json(const std::string& text);
// resolves family defaults and rejects bad grids/values; allow_vae_family is
// for the standalone train subcommand
void validate_config(experiment_config& cfg, bool allow_vae_family = false);
std::string config_to_json(const experiment_config& cfg);

// generator_seed overrides the synthetic generator's seed (sweeps drive the
// dataset from the sweep seed); csv sources ignore it
dataset build_dataset(const experiment_config& cfg,
                      std::optional<std::uint64_t> generator_seed = {});

// mean cost over valid outcomes; empty when none are valid
std::optional<double> metric_cost(const std::vector<recourse_outcome>& outcomes);
// fraction of attempted recourses that reached label +1
double metric_validity(const std::vector<recourse_outcome>& outcomes);
// accuracy after a signed-gradient attack of the given budget on every row
double adversarial_accuracy(const predictor& m, const dataset& ds,
                            double eps_attack);

struct sweep_row {
  std::string dataset;
  std::string model_family;
  int depth = 0;
  int width = 0;
  method_kind method = method_kind::scfe;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  int n_attempted = 0;
  double validity = 0.0;
  std::optional<double> mean_cost;
  std::optional<double> cost_diff_vs_eps0;
  double adv_accuracy = 0.0;  // attack budget 0.1
  int bound_violations = 0;
  int bound_vacuous = 0;
};

struct bound_row {
  std::string instance_id;  // s<seed>-e<eps>-i<test row>
  bound_interval interval;
};

struct condition_row {
  std::string instance_id;
  validity_condition condition;
};

struct lemma1_row {
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  double w_gap = 0.0;      // ||w_nr - w_r||_2
  double delta_min = 0.0;  // min drift budget over training instances
  bool ok = false;
};

struct lemma2_row {
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  lemma2_report report;
};

struct sweep_report {
  experiment_config config;
  std::vector<sweep_row> rows;
  std::vector<bound_row> bounds;
  std::vector<condition_row> conditions;
  std::vector<lemma1_row> lemma1;
  std::vector<lemma2_row> lemma2;
};

// trains one model of the configured family (eps-robust when eps > 0)
model_variant train_family_model(const experiment_config& cfg,
                                 const dataset& train, double eps,
                                 std::uint64_t seed);

// runs one method over the negatively-predicted test instances (capped by
// max_recourse_instances), keyed by test row index; vae may be null unless
// the method is cchvae
std::vector<std::pair<int, recourse_outcome>> run_method(
    const experiment_config& cfg, const predictor& m, const vae_model* vae,
    const dataset& test, double eps, std::uint64_t seed, method_kind method);

// the full protocol: per seed, a baseline (eps = 0) model anchors every cell
// of the epsilon grid; per cell, metrics plus every applicable bound and
// condition check against the baseline. Deterministic for a fixed config.
sweep_report run_sweep(const experiment_config& cfg);

// results.csv + bounds_instances.csv + conditions.csv + summary.json +
// plotdata/*.csv
void emit_report(const sweep_report& rep, const std::string& dir);
// just the per-instance bound and condition files
void emit_bounds(const sweep_report& rep, const std::string& dir);
void emit_plotdata(const std::vector<sweep_row>& rows, const std::string& dir);

std::vector<sweep_row> read_results_csv(const std::string& path);

struct monotone_check {
  bool ok = false;
  int inversions = 0;
  double worst = 0.0;  // largest inversion magnitude
};
// trend check: values follow dir (+1 non-decreasing, -1 non-increasing) with
// at most one inversion of magnitude <= tol
monotone_check near_monotone(const std::vector<double>& values, int dir,
                             double tol = 0.02);

}  // namespace rlab
