#include "rlab/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <json.hpp>
#include <limits>
#include <map>
#include <sstream>

#include "rlab/rng.hpp"

namespace rlab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t k_tag_recourse = 0x7265636f;  // per-instance streams
constexpr double k_nan = std::numeric_limits<double>::quiet_NaN();
constexpr double k_adv_attack_eps = 0.1;  // attack budget of the report column

const char* k_results_header =
    "dataset,model_family,depth,width,method,epsilon,seed,n_attempted,"
    "validity,mean_cost,cost_diff_vs_eps0,adv_accuracy_eps0.1,"
    "bound_violations,bound_vacuous";

// ---- config json helpers ----

void check_keys(const json& j, const char* where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw config_error(std::string(where) + " must be a json object");
  for (const auto& el : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (el.key() == a) {
        known = true;
        break;
      }
    if (!known)
      throw config_error("unknown key '" + el.key() + "' in " + where);
  }
}

template <class T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

col_kind kind_from_name(const std::string& s) {
  if (s == "numeric") return col_kind::numeric;
  if (s == "categorical") return col_kind::categorical;
  if (s == "label") return col_kind::label;
  throw config_error("unknown column kind '" + s +
                     "' (expected numeric, categorical, or label)");
}

const char* kind_name(col_kind k) {
  switch (k) {
    case col_kind::numeric: return "numeric";
    case col_kind::categorical: return "categorical";
    case col_kind::label: return "label";
  }
  throw config_error("kind_name: bad enum value");
}

json config_json(const experiment_config& cfg) {
  json j;
  json& d = j["dataset"];
  d["source"] = cfg.source;
  d["name"] = cfg.dataset_name;
  d["test_fraction"] = cfg.test_fraction;
  d["blobs"] = {{"n_per_class", cfg.blobs.n_per_class},
                {"d", cfg.blobs.d},
                {"class_separation", cfg.blobs.class_separation},
                {"noise_std", cfg.blobs.noise_std},
                {"seed", cfg.blobs.seed}};
  d["factor"] = {{"n", cfg.factor.n},
                 {"d", cfg.factor.d},
                 {"frac_negative", cfg.factor.frac_negative},
                 {"factor_mean", cfg.factor.factor_mean},
                 {"sd_negative", cfg.factor.sd_negative},
                 {"sd_positive", cfg.factor.sd_positive},
                 {"feature_noise", cfg.factor.feature_noise},
                 {"standardize", cfg.factor.standardize},
                 {"seed", cfg.factor.seed}};
  json cols = json::array();
  for (const auto& c : cfg.csv_columns) {
    json jc;
    jc["name"] = c.name;
    jc["kind"] = kind_name(c.kind);
    if (!c.categories.empty()) jc["categories"] = c.categories;
    if (!c.positive_label.empty()) jc["positive_label"] = c.positive_label;
    cols.push_back(jc);
  }
  d["csv"] = {{"path", cfg.csv_path}, {"columns", cols}};
  j["model"] = {
      {"family", cfg.family}, {"depth", cfg.depth}, {"width", cfg.width}};
  json methods = json::array();
  for (method_kind m : cfg.methods) methods.push_back(method_name(m));
  j["sweep"] = {{"epsilon_grid", cfg.epsilon_grid},
                {"seeds", cfg.seeds},
                {"methods", methods},
                {"max_recourse_instances", cfg.max_recourse_instances}};
  j["training"] = {{"epochs", cfg.epochs},
                   {"learning_rate", cfg.learning_rate},
                   {"pgd_steps", cfg.pgd_steps},
                   {"pgd_step_size", cfg.pgd_step_size},
                   {"ntk_beta", cfg.ntk_beta}};
  j["vae"] = {{"latent", cfg.vae_latent},
              {"epochs", cfg.vae_epochs},
              {"learning_rate", cfg.vae_learning_rate}};
  j["recourse"] = {{"scfe",
                    {{"target", cfg.scfe.target},
                     {"lambda_init", cfg.scfe.lambda_init},
                     {"lambda_decay", cfg.scfe.lambda_decay},
                     {"lambda_rounds", cfg.scfe.lambda_rounds},
                     {"inner_steps", cfg.scfe.inner_steps},
                     {"step_size", cfg.scfe.step_size}}},
                   {"gsm",
                    {{"r0", cfg.gsm.r0},
                     {"growth", cfg.gsm.growth},
                     {"samples_per_shell", cfg.gsm.samples_per_shell},
                     {"max_shells", cfg.gsm.max_shells},
                     {"gamma", cfg.gsm.gamma},
                     {"seed", cfg.gsm.seed}}},
                   {"cchvae",
                    {{"r0", cfg.cchvae.r0},
                     {"growth", cfg.cchvae.growth},
                     {"samples_per_step", cfg.cchvae.samples_per_step},
                     {"max_steps", cfg.cchvae.max_steps},
                     {"norm_p", cfg.cchvae.norm_p},
                     {"seed", cfg.cchvae.seed}}}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

// ---- csv helpers ----

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += "\"\"";
    else q += ch;
  }
  return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw io_error("unterminated quote in csv line");
  fields.push_back(std::move(cur));
  return fields;
}

std::string opt_g17(const std::optional<double>& v) {
  return v ? g17(*v) : std::string();
}

}  // namespace

// ---- config ----

experiment_config parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw config_error(std::string("config parse: ") + e.what());
  }
  experiment_config cfg;
  try {
    check_keys(j, "config", {"dataset", "model", "sweep", "training", "vae",
                             "recourse", "output_dir"});
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      check_keys(d, "dataset",
                 {"source", "name", "test_fraction", "blobs", "factor", "csv"});
      get_to(d, "source", cfg.source);
      get_to(d, "name", cfg.dataset_name);
      get_to(d, "test_fraction", cfg.test_fraction);
      if (d.contains("blobs")) {
        const json& b = d["blobs"];
        check_keys(b, "dataset.blobs",
                   {"n_per_class", "d", "class_separation", "noise_std", "seed"});
        get_to(b, "n_per_class", cfg.blobs.n_per_class);
        get_to(b, "d", cfg.blobs.d);
        get_to(b, "class_separation", cfg.blobs.class_separation);
        get_to(b, "noise_std", cfg.blobs.noise_std);
        get_to(b, "seed", cfg.blobs.seed);
      }
      if (d.contains("factor")) {
        const json& f = d["factor"];
        check_keys(f, "dataset.factor",
                   {"n", "d", "frac_negative", "factor_mean", "sd_negative",
                    "sd_positive", "feature_noise", "standardize", "seed"});
        get_to(f, "n", cfg.factor.n);
        get_to(f, "d", cfg.factor.d);
        get_to(f, "frac_negative", cfg.factor.frac_negative);
        get_to(f, "factor_mean", cfg.factor.factor_mean);
        get_to(f, "sd_negative", cfg.factor.sd_negative);
        get_to(f, "sd_positive", cfg.factor.sd_positive);
        get_to(f, "feature_noise", cfg.factor.feature_noise);
        get_to(f, "standardize", cfg.factor.standardize);
        get_to(f, "seed", cfg.factor.seed);
      }
      if (d.contains("csv")) {
        const json& c = d["csv"];
        check_keys(c, "dataset.csv", {"path", "columns"});
        get_to(c, "path", cfg.csv_path);
        if (c.contains("columns")) {
          for (const json& jc : c.at("columns")) {
            check_keys(jc, "dataset.csv.columns[]",
                       {"name", "kind", "categories", "positive_label"});
            column_schema col;
            get_to(jc, "name", col.name);
            std::string kind = "numeric";
            get_to(jc, "kind", kind);
            col.kind = kind_from_name(kind);
            get_to(jc, "categories", col.categories);
            get_to(jc, "positive_label", col.positive_label);
            cfg.csv_columns.push_back(std::move(col));
          }
        }
      }
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, "model", {"family", "depth", "width"});
      get_to(m, "family", cfg.family);
      get_to(m, "depth", cfg.depth);
      get_to(m, "width", cfg.width);
    }
    if (j.contains("sweep")) {
      const json& s = j["sweep"];
      check_keys(s, "sweep",
                 {"epsilon_grid", "seeds", "methods", "max_recourse_instances"});
      get_to(s, "epsilon_grid", cfg.epsilon_grid);
      get_to(s, "seeds", cfg.seeds);
      if (s.contains("methods")) {
        cfg.methods.clear();
        for (const json& m : s.at("methods"))
          cfg.methods.push_back(method_from_name(m.get<std::string>()));
      }
      get_to(s, "max_recourse_instances", cfg.max_recourse_instances);
    }
    if (j.contains("training")) {
      const json& t = j["training"];
      check_keys(t, "training",
                 {"epochs", "learning_rate", "pgd_steps", "pgd_step_size",
                  "ntk_beta"});
      get_to(t, "epochs", cfg.epochs);
      get_to(t, "learning_rate", cfg.learning_rate);
      get_to(t, "pgd_steps", cfg.pgd_steps);
      get_to(t, "pgd_step_size", cfg.pgd_step_size);
      get_to(t, "ntk_beta", cfg.ntk_beta);
    }
    if (j.contains("vae")) {
      const json& v = j["vae"];
      check_keys(v, "vae", {"latent", "epochs", "learning_rate"});
      get_to(v, "latent", cfg.vae_latent);
      get_to(v, "epochs", cfg.vae_epochs);
      get_to(v, "learning_rate", cfg.vae_learning_rate);
    }
    if (j.contains("recourse")) {
      const json& r = j["recourse"];
      check_keys(r, "recourse", {"scfe", "gsm", "cchvae"});
      if (r.contains("scfe")) {
        const json& p = r["scfe"];
        check_keys(p, "recourse.scfe",
                   {"target", "lambda_init", "lambda_decay", "lambda_rounds",
                    "inner_steps", "step_size"});
        get_to(p, "target", cfg.scfe.target);
        get_to(p, "lambda_init", cfg.scfe.lambda_init);
        get_to(p, "lambda_decay", cfg.scfe.lambda_decay);
        get_to(p, "lambda_rounds", cfg.scfe.lambda_rounds);
        get_to(p, "inner_steps", cfg.scfe.inner_steps);
        get_to(p, "step_size", cfg.scfe.step_size);
      }
      if (r.contains("gsm")) {
        const json& p = r["gsm"];
        check_keys(p, "recourse.gsm", {"r0", "growth", "samples_per_shell",
                                       "max_shells", "gamma", "seed"});
        get_to(p, "r0", cfg.gsm.r0);
        get_to(p, "growth", cfg.gsm.growth);
        get_to(p, "samples_per_shell", cfg.gsm.samples_per_shell);
        get_to(p, "max_shells", cfg.gsm.max_shells);
        get_to(p, "gamma", cfg.gsm.gamma);
        get_to(p, "seed", cfg.gsm.seed);
      }
      if (r.contains("cchvae")) {
        const json& p = r["cchvae"];
        check_keys(p, "recourse.cchvae", {"r0", "growth", "samples_per_step",
                                          "max_steps", "norm_p", "seed"});
        get_to(p, "r0", cfg.cchvae.r0);
        get_to(p, "growth", cfg.cchvae.growth);
        get_to(p, "samples_per_step", cfg.cchvae.samples_per_step);
        get_to(p, "max_steps", cfg.cchvae.max_steps);
        get_to(p, "norm_p", cfg.cchvae.norm_p);
        get_to(p, "seed", cfg.cchvae.seed);
      }
    }
    get_to(j, "output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return cfg;
}

experiment_config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const experiment_config& cfg) {
  return config_json(cfg).dump(2) + "\n";
}

void validate_config(experiment_config& cfg, bool allow_vae_family) {
  if (cfg.source != "blobs" && cfg.source != "factor" && cfg.source != "csv")
    throw config_error("dataset source must be blobs, factor, or csv (got '" +
                       cfg.source + "')");
  if (cfg.source == "csv" && cfg.csv_path.empty())
    throw config_error("csv dataset source needs dataset.csv.path");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw config_error("test_fraction must be in (0, 1)");

  bool vae_family = cfg.family == "vae";
  if (vae_family && !allow_vae_family)
    throw config_error("family vae is only usable with the train subcommand");
  if (cfg.family != "linear" && cfg.family != "mlp" && cfg.family != "ntk" &&
      !vae_family)
    throw config_error("model family must be linear, mlp, or ntk (got '" +
                       cfg.family + "')");
  if (cfg.family == "mlp" && (cfg.depth < 1 || cfg.width < 1))
    throw config_error("mlp depth and width must be >= 1");

  if (cfg.epsilon_grid.empty())
    throw config_error("epsilon_grid must be non-empty");
  for (double e : cfg.epsilon_grid)
    if (!std::isfinite(e) || e < 0.0)
      throw config_error("epsilon_grid entries must be finite and >= 0");
  for (size_t i = 0; i + 1 < cfg.epsilon_grid.size(); ++i)
    if (!(cfg.epsilon_grid[i] < cfg.epsilon_grid[i + 1]))
      throw config_error("epsilon_grid must be strictly ascending");
  if (cfg.epsilon_grid.front() != 0.0)
    throw config_error("epsilon_grid must contain 0 (the baseline)");

  if (cfg.seeds.empty()) throw config_error("seeds must be non-empty");
  for (size_t i = 0; i < cfg.seeds.size(); ++i)
    for (size_t k = i + 1; k < cfg.seeds.size(); ++k)
      if (cfg.seeds[i] == cfg.seeds[k])
        throw config_error("duplicate seed " + std::to_string(cfg.seeds[i]));

  if (cfg.methods.empty()) throw config_error("methods must be non-empty");
  for (size_t i = 0; i < cfg.methods.size(); ++i)
    for (size_t k = i + 1; k < cfg.methods.size(); ++k)
      if (cfg.methods[i] == cfg.methods[k])
        throw config_error(std::string("duplicate method ") +
                           method_name(cfg.methods[i]));

  if (cfg.epochs < 0 || cfg.learning_rate < 0.0)
    throw config_error("epochs and learning_rate must be >= 0 (0 = default)");
  if (cfg.epochs == 0) cfg.epochs = cfg.family == "mlp" ? 2000 : 3000;
  if (cfg.learning_rate == 0.0)
    cfg.learning_rate = cfg.family == "mlp" ? 0.2 : 0.01;
  if (cfg.pgd_steps < 1) throw config_error("pgd_steps must be >= 1");
  if (cfg.pgd_step_size < 0.0)
    throw config_error("pgd_step_size must be >= 0 (0 = default)");
  if (!(cfg.ntk_beta > 0.0)) throw config_error("ntk_beta must be > 0");

  if (cfg.vae_latent < 0)
    throw config_error("vae latent must be >= 0 (0 = default)");
  if (cfg.vae_epochs < 1) throw config_error("vae epochs must be >= 1");
  if (!(cfg.vae_learning_rate > 0.0))
    throw config_error("vae learning_rate must be > 0");
  if (cfg.max_recourse_instances < 0)
    throw config_error("max_recourse_instances must be >= 0");

  if (!std::isfinite(cfg.scfe.target))
    throw config_error("scfe target must be finite");
  if (!(cfg.scfe.lambda_init > 0.0))
    throw config_error("scfe lambda_init must be > 0");
  if (!(cfg.scfe.lambda_decay > 0.0 && cfg.scfe.lambda_decay < 1.0))
    throw config_error("scfe lambda_decay must be in (0, 1)");
  if (cfg.scfe.lambda_rounds < 1 || cfg.scfe.inner_steps < 1)
    throw config_error("scfe round/step counts must be >= 1");
  if (!(cfg.scfe.step_size > 0.0))
    throw config_error("scfe step_size must be > 0");
  if (!(cfg.gsm.r0 > 0.0) || !(cfg.gsm.growth > 1.0))
    throw config_error("gsm needs r0 > 0 and growth > 1");
  if (cfg.gsm.samples_per_shell < 1 || cfg.gsm.max_shells < 1)
    throw config_error("gsm sample/shell counts must be >= 1");
  if (cfg.gsm.gamma < 0.0) throw config_error("gsm gamma must be >= 0");
  if (!(cfg.cchvae.r0 > 0.0) || !(cfg.cchvae.growth > 1.0))
    throw config_error("cchvae needs r0 > 0 and growth > 1");
  if (cfg.cchvae.samples_per_step < 1 || cfg.cchvae.max_steps < 1)
    throw config_error("cchvae sample/step counts must be >= 1");
  if (cfg.cchvae.norm_p != 2) throw config_error("cchvae norm_p must be 2");
  if (cfg.output_dir.empty()) throw config_error("output_dir must be set");
}

dataset build_dataset(const experiment_config& cfg,
                      std::optional<std::uint64_t> generator_seed) {
  dataset ds;
  if (cfg.source == "blobs") {
    synthetic_spec sp = cfg.blobs;
    if (generator_seed) sp.seed = *generator_seed;
    ds = make_synthetic(sp);
  } else if (cfg.source == "factor") {
    factor_spec fp = cfg.factor;
    if (generator_seed) fp.seed = *generator_seed;
    ds = make_factor_mixture(fp);
  } else if (cfg.source == "csv") {
    ds = load_csv(cfg.csv_path, cfg.csv_columns);
  } else {
    throw config_error("unknown dataset source '" + cfg.source + "'");
  }
  if (!cfg.dataset_name.empty()) ds.name = cfg.dataset_name;
  return ds;
}

// ---- metrics ----

std::optional<double> metric_cost(const std::vector<recourse_outcome>& outcomes) {
  double sum = 0.0;
  int k = 0;
  for (const auto& o : outcomes)
    if (o.valid) {
      sum += o.cost;
      ++k;
    }
  if (k == 0) return std::nullopt;
  return sum / k;
}

double metric_validity(const std::vector<recourse_outcome>& outcomes) {
  if (outcomes.empty()) throw data_error("metric_validity: empty outcome list");
  int k = 0;
  for (const auto& o : outcomes)
    if (o.valid) ++k;
  return static_cast<double>(k) / static_cast<double>(outcomes.size());
}

double adversarial_accuracy(const predictor& m, const dataset& ds,
                            double eps_attack) {
  if (!(eps_attack >= 0.0))
    throw config_error("adversarial_accuracy: eps_attack must be >= 0");
  if (ds.n() == 0) throw data_error("adversarial_accuracy: empty dataset");
  mat Xa = fgsm_perturb(m, ds.X, ds.y, eps_attack);
  int correct = 0;
  for (int i = 0; i < Xa.rows(); ++i)
    if (label_of(m.score(Xa.row(i).transpose())) == static_cast<int>(ds.y(i)))
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.n());
}

// ---- sweep ----

model_variant train_family_model(const experiment_config& cfg,
                                 const dataset& train, double eps,
                                 std::uint64_t seed) {
  train_config tc;
  tc.epochs = cfg.epochs;
  tc.learning_rate = cfg.learning_rate;
  tc.eps_train = eps;
  tc.seed = seed;
  tc.pgd_steps = cfg.pgd_steps;
  tc.pgd_step_size = cfg.pgd_step_size;
  if (cfg.family == "linear") return train_linear(train, tc);
  if (cfg.family == "mlp") return train_mlp(train, tc, cfg.depth, cfg.width);
  if (cfg.family == "ntk") return train_ntk(train.X, train.y, cfg.ntk_beta, eps);
  throw config_error("train_family_model: unsupported family '" + cfg.family +
                     "'");
}

std::vector<std::pair<int, recourse_outcome>> run_method(
    const experiment_config& cfg, const predictor& m, const vae_model* vae,
    const dataset& test, double eps, std::uint64_t seed, method_kind method) {
  std::vector<int> eligible;
  for (int i = 0; i < test.n(); ++i)
    if (label_of(m.score(test.X.row(i).transpose())) == -1)
      eligible.push_back(i);
  if (cfg.max_recourse_instances > 0 &&
      static_cast<int>(eligible.size()) > cfg.max_recourse_instances)
    eligible.resize(cfg.max_recourse_instances);

  const auto* lin = dynamic_cast<const linear_model*>(&m);
  const std::uint64_t eps_bits = std::bit_cast<std::uint64_t>(eps);
  std::vector<std::pair<int, recourse_outcome>> out;
  out.reserve(eligible.size());
  for (int i : eligible) {
    vec x = test.X.row(i).transpose();
    try {
      std::uint64_t stream = mix_seed({k_tag_recourse, seed, eps_bits,
                                       static_cast<std::uint64_t>(method),
                                       static_cast<std::uint64_t>(i)});
      recourse_outcome o;
      switch (method) {
        case method_kind::scfe:
          // the linear minimizer is available in closed form; the iterative
          // search is for the families without one
          o = lin ? scfe_closed_form(*lin, x, cfg.scfe.lambda_init,
                                     cfg.scfe.target)
                  : scfe_search(m, x, cfg.scfe);
          break;
        case method_kind::gsm: {
          gsm_params p = cfg.gsm;
          p.seed = stream;
          o = gsm_search(m, x, p);
          break;
        }
        case method_kind::cchvae: {
          if (!vae)
            throw config_error("cchvae method needs a trained autoencoder");
          cchvae_params p = cfg.cchvae;
          p.seed = stream;
          o = cchvae_search(m, *vae, x, p);
          break;
        }
      }
      out.emplace_back(i, std::move(o));
    } catch (const error& e) {
      throw error("eps " + gshort(eps) + " seed " + std::to_string(seed) +
                  " instance i" + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

namespace {

using outcome_list = std::vector<std::pair<int, recourse_outcome>>;

struct seed_artifacts {
  dataset train, test;
  model_variant baseline;
  std::optional<vae_model> vae;
  std::map<method_kind, outcome_list> base_outcomes;
  double adv_acc = 0.0;
};

struct cell_result {
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::vector<sweep_row> rows;
  std::vector<bound_row> bounds;
  std::vector<condition_row> conditions;
  std::vector<lemma1_row> l1;
  std::vector<lemma2_row> l2;
};

std::string make_instance_id(std::uint64_t seed, double eps, int idx) {
  return "s" + std::to_string(seed) + "-e" + gshort(eps) + "-i" +
         std::to_string(idx);
}

std::vector<recourse_outcome> strip_indices(const outcome_list& pairs) {
  std::vector<recourse_outcome> v;
  v.reserve(pairs.size());
  for (const auto& p : pairs) v.push_back(p.second);
  return v;
}

// outcomes present in both lists, aligned on the test row index
std::vector<std::pair<const recourse_outcome*, const recourse_outcome*>>
paired_outcomes(const outcome_list& a, const outcome_list& b,
                std::vector<int>& indices) {
  std::vector<std::pair<const recourse_outcome*, const recourse_outcome*>> out;
  size_t i = 0, k = 0;
  while (i < a.size() && k < b.size()) {
    if (a[i].first < b[k].first) {
      ++i;
    } else if (a[i].first > b[k].first) {
      ++k;
    } else {
      out.emplace_back(&a[i].second, &b[k].second);
      indices.push_back(a[i].first);
      ++i;
      ++k;
    }
  }
  return out;
}

seed_artifacts build_seed(const experiment_config& cfg,
                          const dataset* shared_csv, std::uint64_t seed) {
  seed_artifacts a;
  try {
    dataset full = shared_csv ? *shared_csv : build_dataset(cfg, seed);
    std::tie(a.train, a.test) = split(full, cfg.test_fraction, seed);
    a.baseline = train_family_model(cfg, a.train, 0.0, seed);
    bool need_vae = false;
    for (method_kind m : cfg.methods)
      if (m == method_kind::cchvae) need_vae = true;
    if (need_vae)
      a.vae = train_vae(a.train, cfg.vae_latent, cfg.vae_epochs,
                        cfg.vae_learning_rate, seed);
  } catch (const error& e) {
    throw error("seed " + std::to_string(seed) + " baseline: " + e.what());
  }
  const predictor& base = as_predictor(a.baseline);
  for (method_kind m : cfg.methods)
    a.base_outcomes[m] =
        run_method(cfg, base, a.vae ? &*a.vae : nullptr, a.test, 0.0, seed, m);
  a.adv_acc = adversarial_accuracy(base, a.test, k_adv_attack_eps);
  return a;
}

cell_result build_cell(const experiment_config& cfg, const seed_artifacts& a,
                       double eps, std::uint64_t seed) {
  cell_result c;
  c.eps = eps;
  c.seed = seed;

  model_variant robust_storage;
  const model_variant* cell_model = &a.baseline;
  std::map<method_kind, outcome_list> cell_storage;
  const std::map<method_kind, outcome_list>* cell_outcomes = &a.base_outcomes;
  double adv = a.adv_acc;
  if (eps != 0.0) {
    try {
      robust_storage = train_family_model(cfg, a.train, eps, seed);
    } catch (const error& e) {
      throw error("eps " + gshort(eps) + " seed " + std::to_string(seed) +
                  " training: " + e.what());
    }
    cell_model = &robust_storage;
    const predictor& m = as_predictor(*cell_model);
    for (method_kind mk : cfg.methods)
      cell_storage[mk] =
          run_method(cfg, m, a.vae ? &*a.vae : nullptr, a.test, eps, seed, mk);
    cell_outcomes = &cell_storage;
    adv = adversarial_accuracy(m, a.test, k_adv_attack_eps);
  }

  for (method_kind mk : cfg.methods) {
    std::vector<recourse_outcome> flat = strip_indices(cell_outcomes->at(mk));
    sweep_row r;
    r.dataset = a.test.name;
    r.model_family = cfg.family;
    r.depth = cfg.family == "mlp" ? cfg.depth : 0;
    r.width = cfg.family == "mlp" ? cfg.width : 0;
    r.method = mk;
    r.epsilon = eps;
    r.seed = seed;
    r.n_attempted = static_cast<int>(flat.size());
    r.validity = flat.empty() ? k_nan : metric_validity(flat);
    r.mean_cost = flat.empty() ? std::nullopt : metric_cost(flat);
    r.adv_accuracy = adv;
    c.rows.push_back(std::move(r));
  }

  auto account = [&c](method_kind mk, const bound_interval& b) {
    for (auto& r : c.rows)
      if (r.method == mk) {
        if (!b.contained && !b.vacuous) ++r.bound_violations;
        if (b.vacuous) ++r.bound_vacuous;
        return;
      }
  };
  bool has_scfe = cell_outcomes->count(method_kind::scfe) > 0;
  bool has_cchvae = cell_outcomes->count(method_kind::cchvae) > 0;

  if (cfg.family == "linear") {
    const auto& m_nr = std::get<linear_model>(a.baseline);
    const auto& m_r = std::get<linear_model>(*cell_model);
    if (has_scfe) {
      std::vector<int> idxs;
      auto pairs = paired_outcomes(a.base_outcomes.at(method_kind::scfe),
                                   cell_outcomes->at(method_kind::scfe), idxs);
      for (size_t p = 0; p < pairs.size(); ++p) {
        const recourse_outcome& onr = *pairs[p].first;
        const recourse_outcome& orr = *pairs[p].second;
        if (!onr.found || !orr.found) continue;
        vec x = a.test.X.row(idxs[p]).transpose();
        double delta = lemma1_delta(x, cfg.epochs, cfg.learning_rate, eps);
        double emp = std::abs(onr.cost - orr.cost);
        std::string id = make_instance_id(seed, eps, idxs[p]);
        c.bounds.push_back(
            {id, thm1_interval(m_nr.w, delta, cfg.scfe.lambda_init, emp)});
        account(method_kind::scfe, c.bounds.back().interval);
        c.conditions.push_back(
            {id, thm4_condition(m_nr, delta, onr.x_cf, orr.x_cf)});
      }
    }
    lemma1_row l1;
    l1.seed = seed;
    l1.epsilon = eps;
    l1.w_gap = (m_nr.w - m_r.w).norm();
    double dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a.train.n(); ++i)
      dmin = std::min(dmin, lemma1_delta(a.train.X.row(i).transpose(),
                                         cfg.epochs, cfg.learning_rate, eps));
    l1.delta_min = dmin;
    l1.ok = l1.w_gap <= l1.delta_min;
    c.l1.push_back(l1);
  } else if (cfg.family == "ntk") {
    const auto& m_nr = std::get<ntk_model>(a.baseline);
    const auto& m_r = std::get<ntk_model>(*cell_model);
    lemma2_row l2;
    l2.seed = seed;
    l2.epsilon = eps;
    l2.report = lemma2_check(m_nr, m_r);
    c.l2.push_back(l2);
    if (has_scfe) {
      std::vector<int> idxs;
      auto pairs = paired_outcomes(a.base_outcomes.at(method_kind::scfe),
                                   cell_outcomes->at(method_kind::scfe), idxs);
      for (size_t p = 0; p < pairs.size(); ++p) {
        const recourse_outcome& onr = *pairs[p].first;
        const recourse_outcome& orr = *pairs[p].second;
        if (!onr.found || !orr.found) continue;
        vec x = a.test.X.row(idxs[p]).transpose();
        double emp = std::abs(onr.cost - orr.cost);
        std::string id = make_instance_id(seed, eps, idxs[p]);
        c.bounds.push_back({id, thm2_interval(m_nr, m_r, x, emp)});
        account(method_kind::scfe, c.bounds.back().interval);
        c.conditions.push_back(
            {id, thm5_condition(m_nr, m_r, onr.x_cf, orr.x_cf,
                                l2.report.delta_k)});
      }
    }
  }

  if (has_cchvae && a.vae) {
    std::vector<int> idxs;
    auto pairs = paired_outcomes(a.base_outcomes.at(method_kind::cchvae),
                                 cell_outcomes->at(method_kind::cchvae), idxs);
    for (size_t p = 0; p < pairs.size(); ++p) {
      const recourse_outcome& onr = *pairs[p].first;
      const recourse_outcome& orr = *pairs[p].second;
      if (!onr.found || !orr.found) continue;
      double emp = std::abs(onr.cost - orr.cost);
      std::string id = make_instance_id(seed, eps, idxs[p]);
      c.bounds.push_back(
          {id, thm3_interval(a.vae->lipschitz_upper, onr.latent_radius,
                             orr.latent_radius, emp)});
      account(method_kind::cchvae, c.bounds.back().interval);
    }
  }
  return c;
}

}  // namespace

sweep_report run_sweep(const experiment_config& cfg_in) {
  experiment_config cfg = cfg_in;
  validate_config(cfg);
  std::optional<dataset> shared_csv;
  if (cfg.source == "csv") shared_csv = build_dataset(cfg);
  const dataset* csv_ptr = shared_csv ? &*shared_csv : nullptr;

  // per-seed baselines first (each cell of that seed reads them), then the
  // (epsilon, seed) cells; tasks share nothing mutable, and the merge below
  // runs in fixed launch order, so worker scheduling never changes bytes
  std::vector<std::future<seed_artifacts>> seed_futs;
  seed_futs.reserve(cfg.seeds.size());
  for (std::uint64_t s : cfg.seeds)
    seed_futs.push_back(std::async(std::launch::async, [&cfg, csv_ptr, s] {
      return build_seed(cfg, csv_ptr, s);
    }));
  std::vector<seed_artifacts> arts;
  arts.reserve(seed_futs.size());
  for (auto& f : seed_futs) arts.push_back(f.get());

  std::vector<std::future<cell_result>> cell_futs;
  cell_futs.reserve(cfg.epsilon_grid.size() * cfg.seeds.size());
  for (double eps : cfg.epsilon_grid)
    for (size_t si = 0; si < cfg.seeds.size(); ++si)
      cell_futs.push_back(
          std::async(std::launch::async, [&cfg, &arts, si, eps] {
            return build_cell(cfg, arts[si], eps, cfg.seeds[si]);
          }));

  sweep_report rep;
  rep.config = cfg;
  for (auto& f : cell_futs) {
    cell_result c = f.get();
    for (auto& r : c.rows) rep.rows.push_back(std::move(r));
    for (auto& b : c.bounds) rep.bounds.push_back(std::move(b));
    for (auto& q : c.conditions) rep.conditions.push_back(std::move(q));
    for (const auto& l : c.l1) rep.lemma1.push_back(l);
    for (const auto& l : c.l2) rep.lemma2.push_back(l);
  }

  std::stable_sort(rep.rows.begin(), rep.rows.end(),
                   [](const sweep_row& a, const sweep_row& b) {
                     if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
                     if (a.seed != b.seed) return a.seed < b.seed;
                     return static_cast<int>(a.method) <
                            static_cast<int>(b.method);
                   });

  // cost differences are anchored at the epsilon = 0 row of the same
  // (method, seed); the anchor row itself gets an exact 0
  std::map<std::pair<int, std::uint64_t>, std::optional<double>> base_cost;
  for (const auto& r : rep.rows)
    if (r.epsilon == 0.0)
      base_cost[{static_cast<int>(r.method), r.seed}] = r.mean_cost;
  for (auto& r : rep.rows) {
    auto it = base_cost.find({static_cast<int>(r.method), r.seed});
    if (it != base_cost.end() && it->second && r.mean_cost)
      r.cost_diff_vs_eps0 = *r.mean_cost - *it->second;
  }
  return rep;
}

// ---- reports ----

namespace {

struct agg_point {
  double eps = 0.0;
  double validity_mean = k_nan;
  std::optional<double> cost_mean;
  std::optional<double> cost_diff_mean;
  double adv_mean = k_nan;
};

std::map<int, std::vector<agg_point>> aggregate(
    const std::vector<sweep_row>& rows) {
  std::map<int, std::map<double, std::vector<const sweep_row*>>> g;
  for (const auto& r : rows)
    g[static_cast<int>(r.method)][r.epsilon].push_back(&r);
  std::map<int, std::vector<agg_point>> out;
  for (const auto& [mk, by_eps] : g) {
    std::vector<agg_point>& pts = out[mk];
    for (const auto& [eps, cell] : by_eps) {
      agg_point p;
      p.eps = eps;
      double vsum = 0.0, asum = 0.0, csum = 0.0, dsum = 0.0;
      int cn = 0, dn = 0;
      for (const sweep_row* r : cell) {
        vsum += r->validity;
        asum += r->adv_accuracy;
        if (r->mean_cost) {
          csum += *r->mean_cost;
          ++cn;
        }
        if (r->cost_diff_vs_eps0) {
          dsum += *r->cost_diff_vs_eps0;
          ++dn;
        }
      }
      p.validity_mean = vsum / static_cast<double>(cell.size());
      p.adv_mean = asum / static_cast<double>(cell.size());
      if (cn > 0) p.cost_mean = csum / cn;
      if (dn > 0) p.cost_diff_mean = dsum / dn;
      pts.push_back(p);
    }
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write file: " + path);
  return out;
}

void write_results_csv(const std::vector<sweep_row>& rows,
                       const std::string& path) {
  std::ofstream out = open_out(path);
  out << k_results_header << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.dataset) << ',' << r.model_family << ',' << r.depth
        << ',' << r.width << ',' << method_name(r.method) << ','
        << g17(r.epsilon) << ',' << r.seed << ',' << r.n_attempted << ','
        << g17(r.validity) << ',' << opt_g17(r.mean_cost) << ','
        << opt_g17(r.cost_diff_vs_eps0) << ',' << g17(r.adv_accuracy) << ','
        << r.bound_violations << ',' << r.bound_vacuous << '\n';
  }
  if (!out) throw io_error("error writing file: " + path);
}

json monotone_json(const monotone_check& c) {
  return {{"ok", c.ok}, {"inversions", c.inversions}, {"worst", c.worst}};
}

}  // namespace

void emit_bounds(const sweep_report& rep, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out = open_out(dir + "/bounds_instances.csv");
    out << "instance_id,theorem,lower,upper,empirical,contained,vacuous\n";
    for (const auto& b : rep.bounds)
      out << b.instance_id << ',' << theorem_name(b.interval.which) << ','
          << g17(b.interval.lower) << ',' << g17(b.interval.upper) << ','
          << g17(b.interval.empirical) << ',' << (b.interval.contained ? 1 : 0)
          << ',' << (b.interval.vacuous ? 1 : 0) << '\n';
    if (!out) throw io_error("error writing bounds_instances.csv");
  }
  {
    std::ofstream out = open_out(dir + "/conditions.csv");
    out << "instance_id,theorem,lhs,rhs,holds\n";
    for (const auto& q : rep.conditions)
      out << q.instance_id << ',' << condition_name(q.condition.which) << ','
          << g17(q.condition.lhs) << ',' << g17(q.condition.rhs) << ','
          << (q.condition.holds ? 1 : 0) << '\n';
    if (!out) throw io_error("error writing conditions.csv");
  }
}

void emit_plotdata(const std::vector<sweep_row>& rows, const std::string& dir) {
  fs::create_directories(dir);
  auto groups = aggregate(rows);
  {
    std::ofstream out = open_out(dir + "/validity_vs_epsilon.csv");
    out << "method,epsilon,validity_mean\n";
    for (const auto& [mk, pts] : groups)
      for (const auto& p : pts)
        out << method_name(static_cast<method_kind>(mk)) << ',' << g17(p.eps)
            << ',' << g17(p.validity_mean) << '\n';
  }
  {
    std::ofstream out = open_out(dir + "/cost_diff_vs_epsilon.csv");
    out << "method,epsilon,cost_diff_mean\n";
    for (const auto& [mk, pts] : groups)
      for (const auto& p : pts)
        out << method_name(static_cast<method_kind>(mk)) << ',' << g17(p.eps)
            << ',' << opt_g17(p.cost_diff_mean) << '\n';
  }
  {
    std::ofstream out = open_out(dir + "/adv_accuracy_vs_epsilon.csv");
    out << "method,epsilon,adv_accuracy_mean\n";
    for (const auto& [mk, pts] : groups)
      for (const auto& p : pts)
        out << method_name(static_cast<method_kind>(mk)) << ',' << g17(p.eps)
            << ',' << g17(p.adv_mean) << '\n';
  }
}

void emit_report(const sweep_report& rep, const std::string& dir) {
  fs::create_directories(dir);
  write_results_csv(rep.rows, dir + "/results.csv");
  emit_bounds(rep, dir);
  emit_plotdata(rep.rows, dir + "/plotdata");

  json j;
  j["tool_version"] = k_tool_version;
  j["config"] = config_json(rep.config);

  json metrics = json::object();
  auto groups = aggregate(rep.rows);
  for (const auto& [mk, pts] : groups) {
    json arr = json::array();
    for (const auto& p : pts) {
      json o;
      o["epsilon"] = p.eps;
      o["validity_mean"] = p.validity_mean;
      o["mean_cost_mean"] = p.cost_mean ? json(*p.cost_mean) : json();
      o["cost_diff_mean"] = p.cost_diff_mean ? json(*p.cost_diff_mean) : json();
      o["adv_accuracy_mean"] = p.adv_mean;
      arr.push_back(std::move(o));
    }
    metrics[method_name(static_cast<method_kind>(mk))] = std::move(arr);
  }
  j["metrics"] = std::move(metrics);

  struct tally {
    int rows = 0, violations = 0, vacuous = 0;
  };
  tally total;
  std::map<std::string, tally> by_thm = {
      {"thm1", {}}, {"thm2", {}}, {"thm3", {}}};
  for (const auto& b : rep.bounds) {
    tally& t = by_thm[theorem_name(b.interval.which)];
    ++t.rows;
    ++total.rows;
    if (!b.interval.contained && !b.interval.vacuous) {
      ++t.violations;
      ++total.violations;
    }
    if (b.interval.vacuous) {
      ++t.vacuous;
      ++total.vacuous;
    }
  }
  json bs;
  bs["rows"] = total.rows;
  bs["violations"] = total.violations;
  bs["vacuous"] = total.vacuous;
  json bt;
  for (const auto& [name, t] : by_thm)
    bt[name] = {{"rows", t.rows},
                {"violations", t.violations},
                {"vacuous", t.vacuous}};
  bs["by_theorem"] = std::move(bt);
  j["bound_summary"] = std::move(bs);

  std::map<std::string, std::pair<int, int>> cs = {{"thm4", {0, 0}},
                                                   {"thm5", {0, 0}}};
  for (const auto& q : rep.conditions) {
    auto& [n, h] = cs[condition_name(q.condition.which)];
    ++n;
    if (q.condition.holds) ++h;
  }
  json cj;
  for (const auto& [name, nh] : cs)
    cj[name] = {{"rows", nh.first}, {"holds", nh.second}};
  j["condition_summary"] = std::move(cj);

  json l1 = json::array();
  for (const auto& r : rep.lemma1)
    l1.push_back({{"seed", r.seed},
                  {"epsilon", r.epsilon},
                  {"w_gap", r.w_gap},
                  {"delta_min", r.delta_min},
                  {"ok", r.ok}});
  j["lemma1"] = std::move(l1);
  json l2 = json::array();
  for (const auto& r : rep.lemma2)
    l2.push_back({{"seed", r.seed},
                  {"epsilon", r.epsilon},
                  {"delta_k", r.report.delta_k},
                  {"w_gap", r.report.w_gap},
                  {"w_gap_bound", r.report.w_gap_bound},
                  {"wnr_norm", r.report.wnr_norm},
                  {"wr_norm", r.report.wr_norm},
                  {"gap_ok", r.report.gap_ok},
                  {"sandwich_ok", r.report.sandwich_ok}});
  j["lemma2"] = std::move(l2);

  json diag;
  json vmono = json::object(), cmono = json::object();
  for (const auto& [mk, pts] : groups) {
    std::vector<double> vals;
    for (const auto& p : pts) vals.push_back(p.validity_mean);
    vmono[method_name(static_cast<method_kind>(mk))] =
        monotone_json(near_monotone(vals, -1));
    std::vector<double> diffs;
    for (const auto& p : pts)
      if (p.cost_diff_mean) diffs.push_back(*p.cost_diff_mean);
    cmono[method_name(static_cast<method_kind>(mk))] =
        monotone_json(near_monotone(diffs, +1));
  }
  diag["validity_near_monotone"] = std::move(vmono);
  diag["cost_diff_near_monotone"] = std::move(cmono);
  j["diagnostics"] = std::move(diag);

  std::ofstream out = open_out(dir + "/summary.json");
  out << j.dump(2) << '\n';
  if (!out) throw io_error("error writing summary.json");
}

std::vector<sweep_row> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open results file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw io_error("results file is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != k_results_header)
    throw io_error("unexpected results.csv header in " + path);
  std::vector<sweep_row> rows;
  int ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 14)
      throw io_error("results.csv line " + std::to_string(ln) +
                     ": expected 14 fields, got " + std::to_string(f.size()));
    sweep_row r;
    r.dataset = f[0];
    r.model_family = f[1];
    r.depth = static_cast<int>(parse_int(f[2], "depth"));
    r.width = static_cast<int>(parse_int(f[3], "width"));
    r.method = method_from_name(f[4]);
    r.epsilon = parse_double(f[5], "epsilon");
    long long seed = parse_int(f[6], "seed");
    if (seed < 0) throw io_error("results.csv line " + std::to_string(ln) +
                                 ": negative seed");
    r.seed = static_cast<std::uint64_t>(seed);
    r.n_attempted = static_cast<int>(parse_int(f[7], "n_attempted"));
    r.validity = parse_double(f[8], "validity");
    if (!f[9].empty()) r.mean_cost = parse_double(f[9], "mean_cost");
    if (!f[10].empty())
      r.cost_diff_vs_eps0 = parse_double(f[10], "cost_diff_vs_eps0");
    r.adv_accuracy = parse_double(f[11], "adv_accuracy_eps0.1");
    r.bound_violations = static_cast<int>(parse_int(f[12], "bound_violations"));
    r.bound_vacuous = static_cast<int>(parse_int(f[13], "bound_vacuous"));
    rows.push_back(std::move(r));
  }
  return rows;
}

monotone_check near_monotone(const std::vector<double>& values, int dir,
                             double tol) {
  if (dir != 1 && dir != -1)
    throw config_error("near_monotone: dir must be +1 or -1");
  if (!(tol >= 0.0)) throw config_error("near_monotone: tol must be >= 0");
  monotone_check c;
  for (size_t i = 0; i + 1 < values.size(); ++i) {
    double step = values[i + 1] - values[i];
    double inversion = dir == -1 ? step : -step;
    if (inversion > 0.0) {
      ++c.inversions;
      c.worst = std::max(c.worst, inversion);
    }
  }
  c.ok = c.inversions == 0 || (c.inversions == 1 && c.worst <= tol);
  return c;
}

}  // namespace rlab
