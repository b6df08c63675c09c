// qontot command-line front end: gen-data, train, eval, predict.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qontot/datagen.h"
#include "qontot/errors.h"
#include "qontot/matrix_io.h"
#include "qontot/neucot.h"
#include "qontot/train.h"

using nlohmann::json;
using namespace qontot;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitCapacity = 3;
constexpr int kExitNumeric = 4;

// String-valued flags layered over defaults and an optional config file.
// Flag "max-evals" maps to key "max_evals"; values take the default's type.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with option values; flags override it");
  }

  void add(const std::string& name, const std::string& help) {
    app_->add_option("--" + name, values_[name], help);
  }

  json resolve(json defaults) const {
    if (!config_path_.empty()) {
      json file = read_json(config_path_);
      if (!file.is_object()) throw ValidationError("config " + config_path_ + " is not a JSON object");
      for (auto& [k, v] : file.items()) defaults[k] = v;
    }
    for (const auto& [name, text] : values_) {
      if (app_->count("--" + name) == 0) continue;
      std::string key = name;
      std::replace(key.begin(), key.end(), '-', '_');
      defaults[key] = typed(key, text, defaults.contains(key) ? defaults[key] : json());
    }
    return defaults;
  }

  static json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path);
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(path + ": " + e.what());
    }
  }

 private:
  static json typed(const std::string& key, const std::string& text, const json& like) {
    try {
      if (like.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw ValidationError("--" + key + " expects true or false");
      }
      size_t used = 0;
      if (like.is_number_unsigned()) {
        auto v = std::stoull(text, &used);
        if (used == text.size()) return v;
      } else if (like.is_number_integer()) {
        auto v = std::stoll(text, &used);
        if (used == text.size()) return v;
      } else if (like.is_number_float()) {
        auto v = std::stod(text, &used);
        if (used == text.size()) return v;
      } else {
        return text;
      }
    } catch (const std::logic_error&) {
    }
    throw ValidationError("--" + key + ": cannot parse '" + text + "'");
  }

  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, std::string> values_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

std::string stem(const std::string& path) {
  const auto dot = path.rfind('.');
  const auto slash = path.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
  return path.substr(0, dot);
}

void write_manifest(const std::string& out, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs) {
  write_json(stem(out) + ".manifest.json", {{"command", command}, {"config", config}, {"outputs", outputs}});
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError(what + ": cannot parse '" + item + "'");
    }
  }
  return out;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), v.size()); }

int log2_exact(int d) {
  int n = 0;
  while ((1 << n) < d) ++n;
  if ((1 << n) != d || d < 2) throw ValidationError("d must be a power of two >= 2");
  return n;
}

// ---- gen-data ---------------------------------------------------------------

GenConfig preset_config(const std::string& name) {
  GenConfig c;
  if (name == "linear-d8") return c;
  if (name == "nonlinear-d8") {
    c.perturbation = PerturbKind::RecRoot;
    c.a = 100.0;
    c.b = 0.2;
    return c;
  }
  if (name == "fourgroups-d8") {
    c.genes = 100;
    c.base_cells = 2000;
    c.batch_cells = 2000;
    c.batches = 1;
    c.dosage_count = 100;
    c.perturbation = PerturbKind::RecRoot;
    c.a = 100.0;
    c.b = 0.2;
    c.unresponsive_cell_frac = 0.02;
    c.groups = 4;
    c.resample_base = true;
    return c;
  }
  throw ValidationError("unknown preset '" + name + "' (expected linear-d8, nonlinear-d8, fourgroups-d8 or dsm-assign)");
}

// Every gen-data knob, typed and filled from the preset.
json gen_defaults(const std::string& preset) {
  json j = {{"preset", preset}, {"seed", 7u}, {"out", "dataset.json"}};
  if (preset == "dsm-assign") {
    j.update({{"task", "dsm"}, {"count", 40}, {"d", 8}, {"m", 4}, {"layers", 1}, {"ansatz", "checkerboard"},
              {"context_dim", 1}, {"param_lo", -0.8 * M_PI}, {"param_hi", 0.8 * M_PI}});
    return j;
  }
  const GenConfig g = preset_config(preset);
  j.update({{"task", "transport"}, {"clusters", g.clusters}, {"genes", g.genes}, {"dosages", g.dosage_count},
            {"batches", g.batches}, {"gamma", g.gamma}, {"metric", cost_metric_name(g.metric)}});
  return j;
}

GenConfig transport_config(const json& cfg) {
  GenConfig g = preset_config(cfg.at("preset"));
  json gj = gen_config_to_json(g);
  gj["seed"] = cfg.at("seed");
  for (const char* key : {"clusters", "genes", "batches", "gamma", "metric"}) gj[key] = cfg.at(key);
  gj.erase("dosages");  // explicit grid only via "generator"
  gj["dosage_count"] = cfg.at("dosages");
  // A config file may carry a full "generator" object for the remaining knobs.
  if (cfg.contains("generator")) gj.update(cfg.at("generator"));
  return gen_config_from_json(gj);
}

int cmd_gen_data(const json& cfg) {
  const std::string out = cfg.at("out").get<std::string>();
  if (cfg.at("task") == "dsm") {
    const int n = log2_exact(cfg.at("d").get<int>());
    auto spec = make_encoding(TargetKind::Dsm, ansatz_kind_from_name(cfg.at("ansatz")), n, cfg.at("m").get<int>(),
                              cfg.at("layers").get<int>(), cfg.at("context_dim").get<int>());
    std::mt19937_64 rng(cfg.at("seed").get<std::uint64_t>());
    Dataset ds = gen_dsm_dataset(spec, cfg.at("count").get<int>(), cfg.at("param_lo").get<double>(),
                                 cfg.at("param_hi").get<double>(), rng);
    ds.meta.seed = cfg.at("seed").get<std::uint64_t>();
    write_json(out, dataset_to_json(ds));
    write_json(stem(out) + ".summary.json", {{"samples", ds.samples.size()}, {"d", ds.meta.d}, {"task", "dsm"}});
    write_manifest(out, "gen-data", cfg, {out, stem(out) + ".summary.json"});
    std::cout << "wrote " << ds.samples.size() << " dsm samples (d=" << ds.meta.d << ") to " << out << "\n";
    return 0;
  }
  if (cfg.at("task") != "transport") throw ValidationError("task must be transport or dsm");
  Dataset ds = build_dataset(transport_config(cfg));
  write_json(out, dataset_to_json(ds));
  // Per-dosage mean ||mu - nu||_1 for plotting.
  std::map<double, std::pair<double, int>> by_dose;
  for (const auto& s : ds.samples) {
    auto& e = by_dose[s.context[0]];
    e.first += (s.mu - s.nu).lpNorm<1>();
    ++e.second;
  }
  std::ostringstream csv;
  csv << "dosage,mean_l1\n";
  for (const auto& [dose, e] : by_dose) csv << format_double(dose) << "," << format_double(e.first / e.second) << "\n";
  write_text(stem(out) + ".dosage_l1.csv", csv.str());
  write_json(stem(out) + ".summary.json",
             {{"samples", ds.samples.size()}, {"d", ds.meta.d}, {"k", ds.meta.k}, {"task", "transport"}});
  write_manifest(out, "gen-data", cfg, {out, stem(out) + ".summary.json", stem(out) + ".dosage_l1.csv"});
  std::cout << "wrote " << ds.samples.size() << " samples (d=" << ds.meta.d << ", k=" << ds.meta.k << ") to " << out
            << "\n";
  return 0;
}

// ---- shared split handling ----------------------------------------------------

struct Parts {
  Dataset train;
  Dataset test;
};

Parts apply_split(const Dataset& ds, const json& split_cfg) {
  const std::string kind = split_cfg.at("split");
  if (kind == "none") return {ds, ds};
  SplitKind sk;
  if (kind == "random") {
    sk = SplitKind::Random;
  } else if (kind == "extrapolation") {
    sk = SplitKind::Extrapolation;
  } else {
    throw ValidationError("unknown split '" + kind + "' (expected none, random or extrapolation)");
  }
  std::mt19937_64 rng(split_cfg.at("split_seed").get<std::uint64_t>());
  SplitResult r = split(ds, sk, split_cfg.at("test_frac").get<double>(), rng);
  return {ds.subset(r.train), ds.subset(r.test)};
}

json split_part(const json& cfg) {
  return {{"split", cfg.at("split")}, {"test_frac", cfg.at("test_frac")}, {"split_seed", cfg.at("split_seed")}};
}

// ---- train ---------------------------------------------------------------------

int cmd_train(json cfg) {
  const Dataset all = dataset_from_json(Flags::read_json(cfg.at("data")));
  const Parts parts = apply_split(all, split_part(cfg));
  const bool dsm = all.meta.task == TargetKind::Dsm;
  if (cfg.at("loss") == "auto") cfg["loss"] = dsm ? "dsm" : "transport";
  const std::string out = cfg.at("out");
  json model;
  if (cfg.at("predictor") == "qontot") {
    const int n = log2_exact(all.meta.d);
    EncodingSpec spec = make_encoding(all.meta.task, ansatz_kind_from_name(cfg.at("ansatz")), n,
                                      cfg.at("m").get<int>(), cfg.at("layers").get<int>(), all.meta.context_dim,
                                      cfg.at("shared").get<bool>());
    spec.aggregation = aggregation_from_name(cfg.at("aggregation"));
    if (cfg.at("mode") == "shots") {
      if (cfg.at("shots").get<std::int64_t>() < 1) throw ValidationError("shots mode needs --shots >= 1");
    } else if (cfg.at("mode") == "exact") {
      cfg["shots"] = 0;
    } else {
      throw ValidationError("unknown mode '" + cfg.at("mode").get<std::string>() + "' (expected exact or shots)");
    }
    json tc = {{"loss", cfg.at("loss")},         {"optimizer", cfg.at("optimizer")}, {"max_evals", cfg.at("max_evals")},
               {"init", cfg.at("init")},         {"init_lo", cfg.at("init_lo")},     {"init_hi", cfg.at("init_hi")},
               {"shots", cfg.at("shots")},       {"seed", cfg.at("seed")}};
    TrainConfig train_cfg = train_config_from_json(tc);
    OptimizeResult r = optimize(train_cfg, spec, parts.train);
    spec.shots = train_cfg.shots;
    model = {{"kind", "qontot"},
             {"spec", encoding_to_json(spec)},
             {"theta", r.theta},
             {"train_config", train_config_to_json(train_cfg)},
             {"best_objective", r.best},
             {"trace", trace_to_json(r.trace)}};
    std::cout << "best objective " << format_double(r.best) << " after " << r.trace.size() << " evaluations\n";
  } else if (cfg.at("predictor") == "neucot") {
    NeuConfig nc;
    nc.hidden = neucot_size(cfg.at("size"));
    nc.epochs = cfg.at("epochs").get<int>();
    nc.lr = cfg.at("lr").get<double>();
    nc.dropout_rate = cfg.at("dropout").get<double>();
    nc.residual = cfg.at("residual").get<bool>();
    nc.loss.loss = neu_loss_from_name(cfg.at("loss"));
    nc.loss.dsm_penalty = cfg.at("dsm_penalty").get<double>();
    nc.val_frac = cfg.at("val_frac").get<double>();
    nc.seed = cfg.at("seed").get<std::uint64_t>();
    NeuResult r = train_neucot(parts.train, nc);
    model = {{"kind", "neucot"},
             {"task", target_name(all.meta.task)},
             {"model", mlp_to_json(r.model)},
             {"neu_config", neu_config_to_json(nc)},
             {"best_epoch", r.best_epoch},
             {"train_loss", r.train_loss},
             {"val_loss", r.val_loss}};
    std::cout << "best validation loss " << format_double(r.val_loss[r.best_epoch]) << " at epoch " << r.best_epoch
              << "\n";
  } else {
    throw ValidationError("train: --predictor must be qontot or neucot");
  }
  model["split"] = split_part(cfg);
  write_json(out, model);
  write_manifest(out, "train", cfg, {out});
  return 0;
}

// ---- eval / predict ---------------------------------------------------------------

Predictor load_predictor(const json& model) {
  const std::string kind = model.at("kind");
  if (kind == "qontot") {
    return qontot_predictor(encoding_from_json(model.at("spec")), model.at("theta").get<std::vector<double>>());
  }
  if (kind == "neucot") {
    return neucot_predictor(mlp_from_json(model.at("model")), target_from_name(model.at("task")));
  }
  throw ValidationError("model kind '" + kind + "' is not qontot or neucot");
}

int cmd_eval(json cfg) {
  const Dataset all = dataset_from_json(Flags::read_json(cfg.at("data")));
  const PredictorKind kind = predictor_from_name(cfg.at("predictor"));
  json model;
  const bool needs_model = kind == PredictorKind::Qontot || kind == PredictorKind::Neucot;
  if (needs_model) {
    if (cfg.at("model").get<std::string>().empty()) throw ValidationError("eval: --model is required for this predictor");
    model = Flags::read_json(cfg.at("model"));
    if (model.at("kind") != cfg.at("predictor")) throw ValidationError("eval: model kind differs from --predictor");
    // The split recorded at training time applies unless overridden.
    if (cfg.at("split") == "model" && model.contains("split")) {
      for (auto& [k, v] : model.at("split").items()) cfg[k] = v;
    }
  }
  if (cfg.at("split") == "model") cfg["split"] = "none";
  const Parts parts = apply_split(all, split_part(cfg));
  Predictor p;
  switch (kind) {
    case PredictorKind::Identity: p = baseline_identity(all.meta.task); break;
    case PredictorKind::Average:
      if (all.meta.task != TargetKind::Transport) throw ValidationError("eval: average needs a transport dataset");
      p = baseline_average(parts.train, cfg.at("mean_of_plans").get<bool>());
      break;
    default: p = load_predictor(model);
  }
  if (p.task != all.meta.task) throw ValidationError("eval: predictor task differs from dataset task");
  if (p.kind == PredictorKind::Qontot && (p.spec.d() != all.meta.d || p.spec.ansatz.context_dim != all.meta.context_dim)) {
    throw ValidationError("eval: model dimensions differ from the dataset");
  }
  std::mt19937_64 rng(cfg.at("seed").get<std::uint64_t>());
  MetricsSummary s = evaluate(p, parts.test, &rng);
  const std::string out = cfg.at("out");
  json j = summary_to_json(s);
  j["predictor"] = cfg.at("predictor");
  j["samples"] = parts.test.samples.size();
  write_json(out, j);
  std::ostringstream csv;
  csv << "sample,context,sae,rel_frob,frob,l2,r2\n";
  for (size_t i = 0; i < s.per_sample.size(); ++i) {
    const auto& m = s.per_sample[i];
    std::string ctx;
    for (Eigen::Index k = 0; k < parts.test.samples[i].context.size(); ++k) {
      ctx += (k ? ";" : "") + format_double(parts.test.samples[i].context[k]);
    }
    csv << i << "," << ctx << "," << format_double(m.sae) << "," << format_double(m.rel_frob) << ","
        << format_double(m.frob) << "," << format_double(m.l2) << "," << (m.r2 ? format_double(*m.r2) : "") << "\n";
  }
  write_text(stem(out) + ".per_sample.csv", csv.str());
  write_manifest(out, "eval", cfg, {out, stem(out) + ".per_sample.csv"});
  std::cout << cfg.at("predictor").get<std::string>() << ": sae " << format_double(s.mean.sae) << ", rel_frob "
            << format_double(s.mean.rel_frob) << ", l2 " << format_double(s.mean.l2) << "\n";
  return 0;
}

int cmd_predict(const json& cfg) {
  const json model = Flags::read_json(cfg.at("model"));
  Predictor p = load_predictor(model);
  const Vector context = to_vector(parse_list(cfg.at("context"), "--context"));
  Vector mu;
  if (!cfg.at("mu_file").get<std::string>().empty()) {
    std::ifstream in(cfg.at("mu_file").get<std::string>());
    if (!in) throw ValidationError("cannot read " + cfg.at("mu_file").get<std::string>());
    Matrix m = read_csv(in);
    mu = Eigen::Map<const Vector>(m.data(), m.size());
  } else {
    mu = to_vector(parse_list(cfg.at("mu"), "--mu"));
  }
  const int d = p.kind == PredictorKind::Qontot ? p.spec.d() : p.mlp->d;
  if (mu.size() != d) throw ValidationError("predict: mu must have " + std::to_string(d) + " entries");
  if (!(mu.minCoeff() > 0.0)) throw ValidationError("predict: mu must be strictly positive");
  if (std::abs(mu.sum() - 1.0) > 1e-9) throw ValidationError("predict: mu must sum to 1");
  std::mt19937_64 rng(cfg.at("seed").get<std::uint64_t>());
  const Matrix plan = p.predict(context, mu, &rng);
  const std::string out = cfg.at("out");
  const std::string format = cfg.at("format");
  if (format == "csv") {
    std::ostringstream os;
    write_csv(os, plan);
    write_text(out, os.str());
  } else if (format == "json") {
    write_json(out, matrix_to_json(plan));
  } else {
    throw ValidationError("predict: --format must be csv or json");
  }
  const Vector nu = plan.colwise().sum().transpose();
  write_json(stem(out) + ".nu.json", vector_to_json(nu));
  write_manifest(out, "predict", cfg, {out, stem(out) + ".nu.json"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual optimal transport with quantum-circuit encodings"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  Flags gen_flags(gen);
  for (auto [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"preset", "linear-d8, nonlinear-d8, fourgroups-d8 or dsm-assign"},
           {"task", "transport or dsm"},
           {"seed", "random seed"},
           {"out", "dataset JSON path"},
           {"count", "dsm: number of samples"},
           {"d", "dsm: matrix order"},
           {"m", "dsm: auxiliary Bell pairs of the teacher"},
           {"layers", "dsm: teacher layers"},
           {"ansatz", "dsm: teacher ansatz"},
           {"context-dim", "dsm: context dimension"},
           {"param-lo", "dsm: teacher parameter lower bound"},
           {"param-hi", "dsm: teacher parameter upper bound"},
           {"clusters", "transport: k-means clusters"},
           {"genes", "transport: genes"},
           {"dosages", "transport: number of dosages"},
           {"batches", "transport: batches per dosage"},
           {"gamma", "transport: Sinkhorn regularization"},
           {"metric", "transport: euclidean or cosine"}}) {
    gen_flags.add(name, help);
  }

  auto* train = app.add_subcommand("train", "Train a QontOT or NeuCOT model");
  Flags train_flags(train);
  for (auto name : {"data", "out", "predictor", "loss", "ansatz", "layers", "m", "aggregation", "shared", "mode",
                    "shots", "optimizer", "max-evals", "init", "init-lo", "init-hi", "seed", "split", "test-frac",
                    "split-seed", "size", "epochs", "lr", "dropout", "residual", "dsm-penalty", "val-frac"}) {
    train_flags.add(name, "");
  }

  auto* eval = app.add_subcommand("eval", "Evaluate a predictor on a dataset");
  Flags eval_flags(eval);
  for (auto name : {"data", "model", "predictor", "out", "seed", "split", "test-frac", "split-seed", "mean-of-plans"}) {
    eval_flags.add(name, "");
  }

  auto* predict = app.add_subcommand("predict", "Predict a plan for one context");
  Flags predict_flags(predict);
  for (auto name : {"model", "context", "mu", "mu-file", "out", "format", "seed"}) predict_flags.add(name, "");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) {
      json first = gen_flags.resolve({{"preset", ""}, {"task", ""}});
      std::string preset = first.at("preset");
      if (preset.empty()) preset = first.at("task") == "dsm" ? "dsm-assign" : "linear-d8";
      return cmd_gen_data(gen_flags.resolve(gen_defaults(preset)));
    }
    if (*train) {
      json defaults = {{"data", ""},          {"out", "model.json"},   {"predictor", "qontot"}, {"loss", "auto"},
                       {"ansatz", "checkerboard"}, {"layers", 2},      {"m", 1},                {"aggregation", "atop"},
                       {"shared", false},     {"mode", "exact"},       {"shots", 8192},         {"optimizer", "bfgs_numeric"},
                       {"max_evals", 3000},   {"init", "default"},     {"init_lo", -0.1},       {"init_hi", 0.1},
                       {"seed", 1u},          {"split", "random"},     {"test_frac", 0.2},      {"split_seed", 1u},
                       {"size", "M"},         {"epochs", 500},         {"lr", 5e-4},            {"dropout", 0.4},
                       {"residual", false},   {"dsm_penalty", 0.0},    {"val_frac", 0.1}};
      return cmd_train(train_flags.resolve(defaults));
    }
    if (*eval) {
      json defaults = {{"data", ""},     {"model", ""},       {"predictor", "qontot"}, {"out", "metrics.json"},
                       {"seed", 1u},     {"split", "model"},  {"test_frac", 0.2},      {"split_seed", 1u},
                       {"mean_of_plans", false}};
      return cmd_eval(eval_flags.resolve(defaults));
    }
    if (*predict) {
      json defaults = {{"model", ""}, {"context", "0"}, {"mu", ""}, {"mu_file", ""},
                       {"out", "plan.csv"}, {"format", "csv"}, {"seed", 1u}};
      return cmd_predict(predict_flags.resolve(defaults));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCapacity;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
