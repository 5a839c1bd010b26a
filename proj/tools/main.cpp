// Command line driver: dataset generation, divergence estimates, the
// permutation-test power/calibration harness, and the noisy-label case
// study. Every run is a pure function of --seed; outputs are CSV plus a
// .manifest.json run record.

#include "rdiv/data.hpp"
#include "rdiv/divergences.hpp"
#include "rdiv/models.hpp"
#include "rdiv/noisy.hpp"
#include "rdiv/rng.hpp"
#include "rdiv/scenarios.hpp"
#include "rdiv/testing.hpp"
#include "rdiv/version.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON config underlay: command line flags win, config supplies the rest.
class ConfigLayer {
 public:
  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    try {
      in >> data_;
    } catch (const json::exception& e) {
      throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
    }
    if (!data_.is_object()) throw ConfigError("config: top level must be an object");
  }

  template <typename T>
  void apply(const CLI::Option* opt, T& value, const std::string& key) {
    known_.insert(key);
    if (opt != nullptr && opt->count() > 0) return;
    if (!data_.contains(key)) return;
    try {
      value = data_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: field '" + key + "' has the wrong type");
    }
  }

  void reject_unknown_keys() const {
    for (const auto& item : data_.items()) {
      if (known_.find(item.key()) == known_.end()) {
        throw ConfigError("config: unknown field '" + item.key() + "'");
      }
    }
  }

 private:
  json data_ = json::object();
  std::set<std::string> known_;
};

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(csv);
  while (std::getline(ss, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv, const std::string& field) {
  std::vector<std::size_t> out;
  for (const auto& tok : split_list(csv)) {
    try {
      const long long v = std::stoll(tok);
      if (v < 0) throw std::out_of_range("negative");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("config: field '" + field + "' has a malformed entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("config: field '" + field + "' is empty");
  return out;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& field) {
  std::vector<double> out;
  for (const auto& tok : split_list(csv)) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("config: field '" + field + "' has a malformed entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("config: field '" + field + "' is empty");
  return out;
}

std::vector<int> parse_int_list(const std::string& csv, const std::string& field) {
  std::vector<int> out;
  for (auto v : parse_size_list(csv, field)) out.push_back(static_cast<int>(v));
  return out;
}

// Shared model flags resolved into a ModelSpec. "mlp" becomes a classifier
// when the data it will see carries labels, an autoencoder otherwise.
struct ModelFlags {
  std::string model = "kde";
  std::string hidden = "32";
  int epochs = 50;
  int batch = 128;
  double lr = 1e-3;
  std::string optimizer = "adam";
  double bandwidth = 0.0;  // 0 = Silverman
  double loss_clip = 0.0;  // 0 = off

  rdiv::ModelSpec resolve(bool labeled_data, const std::string& field) const {
    rdiv::MlpConfig cfg;
    cfg.hidden = parse_int_list(hidden, "hidden");
    cfg.epochs = epochs;
    cfg.batch = batch;
    cfg.learning_rate = lr;
    if (optimizer == "adam") {
      cfg.optimizer = rdiv::OptimizerKind::Adam;
    } else if (optimizer == "sgd") {
      cfg.optimizer = rdiv::OptimizerKind::Sgd;
    } else {
      throw ConfigError("config: field 'optimizer' must be adam or sgd");
    }
    rdiv::ModelSpec spec;
    if (model == "mean") {
      spec = rdiv::ModelSpec::mean();
    } else if (model == "gaussian") {
      spec = rdiv::ModelSpec::gaussian();
    } else if (model == "kde") {
      spec = rdiv::ModelSpec::kde(bandwidth > 0.0 ? std::optional<double>(bandwidth)
                                                  : std::nullopt);
    } else if (model == "mlp") {
      spec = labeled_data ? rdiv::ModelSpec::mlp_classifier(cfg)
                          : rdiv::ModelSpec::mlp_autoencoder(cfg);
    } else {
      throw ConfigError("config: field '" + field + "' must be mean, gaussian, kde, or mlp");
    }
    if (loss_clip > 0.0) spec.loss_clip = loss_clip;
    return spec;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags,
                     std::vector<std::pair<const CLI::Option*, std::string>>& bindings) {
  bindings.emplace_back(cmd->add_option("--model", flags.model, "mean|gaussian|kde|mlp"),
                        "model");
  bindings.emplace_back(cmd->add_option("--hidden", flags.hidden, "MLP hidden widths, comma separated"),
                        "hidden");
  bindings.emplace_back(cmd->add_option("--epochs", flags.epochs, "MLP training epochs"),
                        "epochs");
  bindings.emplace_back(cmd->add_option("--batch", flags.batch, "MLP mini-batch size"), "batch");
  bindings.emplace_back(cmd->add_option("--lr", flags.lr, "MLP learning rate"), "lr");
  bindings.emplace_back(cmd->add_option("--optimizer", flags.optimizer, "adam|sgd"), "optimizer");
  bindings.emplace_back(cmd->add_option("--bandwidth", flags.bandwidth,
                                        "KDE / MMD kernel bandwidth (0 = default rule)"),
                        "bandwidth");
  bindings.emplace_back(cmd->add_option("--loss-clip", flags.loss_clip,
                                        "clamp per-sample losses to [-c, c] (0 = off)"),
                        "loss_clip");
}

std::string fmt(double v) { return rdiv::format_double(v); }

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

struct RunRecord {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const std::string& manifest_path) const {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["versions"] = {{"rdiv", rdiv::kVersion},
                     {"dataset_format", rdiv::kDatasetFormatVersion},
                     {"hypothesis_format", rdiv::kHypothesisFormatVersion}};
    m["outputs"] = outputs;
    m["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text_file(manifest_path, m.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string generator = "blob";
  std::string side = "P";
  std::size_t n = 1000;
  std::size_t d = 10;
  int classes = 10;
  double separation = 4.0;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";
};

int run_gen(const GenArgs& a) {
  if (a.out.empty()) throw ConfigError("config: field 'out' is required");
  rdiv::Side side;
  if (a.side == "P") {
    side = rdiv::Side::P;
  } else if (a.side == "Q") {
    side = rdiv::Side::Q;
  } else {
    throw ConfigError("config: field 'side' must be P or Q");
  }

  RunRecord record;
  record.command = "gen";
  record.seed = a.seed;
  record.config = {{"generator", a.generator}, {"side", a.side},       {"n", a.n},
                   {"d", a.d},                 {"classes", a.classes}, {"separation", a.separation},
                   {"seed", a.seed},           {"out", a.out},         {"format", a.format}};

  std::optional<rdiv::DataMatrix> data;
  if (a.generator == "blob") {
    data = rdiv::gen_blob(a.n, a.seed, side);
  } else if (a.generator == "hdgm") {
    data = rdiv::gen_hdgm(a.n, a.d, a.seed, side);
  } else if (a.generator == "gauss-classes") {
    data = rdiv::gen_gauss_classes(a.n, a.classes, a.d, a.separation, a.seed);
  } else {
    throw ConfigError("config: field 'generator' must be blob, hdgm, or gauss-classes");
  }

  if (a.format == "csv") {
    rdiv::save_csv(*data, a.out);
  } else if (a.format == "bin") {
    rdiv::save_binary(*data, a.out);
  } else {
    throw ConfigError("config: field 'format' must be csv or bin");
  }
  record.outputs.push_back(a.out);
  record.write(a.out + ".manifest.json");
  std::cout << "wrote " << data->rows() << " x " << data->dim() << " samples to " << a.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string config;
  std::string estimator = "rdiv";
  ModelFlags model;
  std::string p_path;
  std::string q_path;
  std::string phi = "mean";
  std::uint64_t seed = 1;
  std::string out;
};

std::string estimate_csv(const rdiv::DivergenceEstimate& est, std::size_t n, std::size_t d,
                         std::uint64_t seed) {
  std::string s = "estimator,value,risk_p,risk_q,N,d,seed\n";
  s += rdiv::estimator_name(est.estimator) + "," + fmt(est.value) + "," + fmt(est.risk_p) +
       "," + fmt(est.risk_q) + "," + std::to_string(n) + "," + std::to_string(d) + "," +
       std::to_string(seed) + "\n";
  return s;
}

int run_estimate(const EstimateArgs& a) {
  if (a.p_path.empty()) throw ConfigError("config: field 'p' is required");
  if (a.q_path.empty()) throw ConfigError("config: field 'q' is required");
  const auto kind = rdiv::parse_estimator(a.estimator);
  if (!kind) {
    throw ConfigError("config: field 'estimator' must be rdiv, hdiv, mmd, c2st-s, or c2st-l");
  }
  rdiv::HPhi phi;
  if (a.phi == "mean") {
    phi = rdiv::HPhi::Mean;
  } else if (a.phi == "max") {
    phi = rdiv::HPhi::Max;
  } else {
    throw ConfigError("config: field 'phi' must be mean or max");
  }

  rdiv::DatasetPair pair(rdiv::load_dataset(a.p_path), rdiv::load_dataset(a.q_path));
  const bool labeled = pair.p_hat.has_labels();

  RunRecord record;
  record.command = "estimate";
  record.seed = a.seed;
  record.config = {{"estimator", a.estimator}, {"model", a.model.model}, {"p", a.p_path},
                   {"q", a.q_path},            {"phi", a.phi},           {"seed", a.seed},
                   {"out", a.out}};

  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  rdiv::DivergenceEstimate est;
  switch (*kind) {
    case rdiv::EstimatorKind::RDiv:
      est = rdiv::r_div(pair, a.model.resolve(labeled, "model"), a.seed);
      break;
    case rdiv::EstimatorKind::HDiv:
      est = rdiv::h_div(pair, a.model.resolve(labeled, "model"), phi, a.seed);
      break;
    case rdiv::EstimatorKind::MmdO: {
      const auto bw = a.model.bandwidth > 0.0 ? std::optional<double>(a.model.bandwidth)
                                              : std::nullopt;
      est = {rdiv::mmd_o(pair, bw), kNan, kNan, rdiv::EstimatorKind::MmdO, a.seed};
      break;
    }
    case rdiv::EstimatorKind::C2stS:
    case rdiv::EstimatorKind::C2stL: {
      ModelFlags mf = a.model;
      mf.model = "mlp";
      const auto variant = *kind == rdiv::EstimatorKind::C2stS ? rdiv::C2stVariant::S
                                                               : rdiv::C2stVariant::L;
      est = {rdiv::c2st(pair, mf.resolve(true, "model"), variant, a.seed), kNan, kNan, *kind,
             a.seed};
      break;
    }
  }

  const std::string csv = estimate_csv(est, pair.n(), pair.dim(), a.seed);
  std::cout << csv;
  if (!a.out.empty()) {
    write_text_file(a.out, csv);
    record.outputs.push_back(a.out);
    record.write(a.out + ".manifest.json");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// power / calibrate
// ---------------------------------------------------------------------------

struct PowerArgs {
  std::string config;
  std::string scenario = "blob";
  std::string estimator = "rdiv";
  ModelFlags model;
  std::string phi = "mean";
  std::string n_list = "400";
  std::string d_list = "0";  // 0 = scenario default
  std::size_t k = 100;
  std::size_t z = 100;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  std::string curve_out;
};

int run_power(const PowerArgs& a, bool calibrate) {
  const char* command = calibrate ? "calibrate" : "power";
  if (a.out.empty()) throw ConfigError("config: field 'out' is required");
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) {
    throw ConfigError("config: field 'alpha' must lie in (0, 1)");
  }
  if (a.z < 2) throw ConfigError("config: field 'z' must be >= 2");
  if (a.k < 1) throw ConfigError("config: field 'k' must be >= 1");
  const auto kind = rdiv::parse_estimator(a.estimator);
  if (!kind) {
    throw ConfigError("config: field 'estimator' must be rdiv, hdiv, mmd, c2st-s, or c2st-l");
  }
  rdiv::HPhi phi;
  if (a.phi == "mean") {
    phi = rdiv::HPhi::Mean;
  } else if (a.phi == "max") {
    phi = rdiv::HPhi::Max;
  } else {
    throw ConfigError("config: field 'phi' must be mean or max");
  }
  const auto n_values = parse_size_list(a.n_list, "n");
  const auto d_values = parse_size_list(a.d_list, "d");
  const auto names = rdiv::scenario_names();
  if (std::find(names.begin(), names.end(), a.scenario) == names.end()) {
    throw ConfigError("config: field 'scenario' names an unknown scenario '" + a.scenario + "'");
  }
  if (calibrate && !rdiv::scenario_is_null(a.scenario)) {
    throw ConfigError("config: field 'scenario' must be a *-null scenario for calibrate");
  }

  RunRecord record;
  record.command = command;
  record.seed = a.seed;
  record.config = {{"scenario", a.scenario}, {"estimator", a.estimator},
                   {"model", a.model.model}, {"phi", a.phi},
                   {"n", a.n_list},          {"d", a.d_list},
                   {"k", a.k},               {"z", a.z},
                   {"alpha", a.alpha},       {"seed", a.seed},
                   {"threads", a.threads},   {"out", a.out},
                   {"curve_out", a.curve_out}};

  // Scenario data is unlabeled, so "mlp" resolves to the autoencoder for
  // rdiv/hdiv; c2st builds its own binary classifier.
  ModelFlags mf = a.model;
  if (*kind == rdiv::EstimatorKind::C2stS || *kind == rdiv::EstimatorKind::C2stL) {
    mf.model = "mlp";
  }
  const auto bw = mf.bandwidth > 0.0 ? std::optional<double>(mf.bandwidth) : std::nullopt;
  const rdiv::PairStatistic stat = rdiv::make_statistic(
      *kind,
      *kind == rdiv::EstimatorKind::MmdO ? rdiv::ModelSpec::mean() : mf.resolve(false, "model"),
      phi, bw);

  std::string csv = "estimator,scenario,N,d,K,Z,alpha,power,std_err\n";
  struct CurveRow {
    std::size_t x;
    double power;
    double std_err;
  };
  std::vector<CurveRow> curve;
  const bool sweep_n = n_values.size() > 1;

  for (std::size_t d_flag : d_values) {
    const auto scenario = rdiv::make_scenario(a.scenario, d_flag);
    const std::size_t dim = rdiv::scenario_dim(a.scenario, d_flag);
    for (std::size_t n : n_values) {
      const std::uint64_t run_seed =
          rdiv::derive_seed(a.seed, 71, dim * 1000003 + n);  // one stream per (N, d) cell
      const auto report = calibrate
                              ? rdiv::type1_calibration(scenario, stat, n, a.k, a.z, a.alpha,
                                                        run_seed, a.threads)
                              : rdiv::test_power(scenario, stat, n, a.k, a.z, a.alpha,
                                                 run_seed, a.threads);
      csv += a.estimator + "," + a.scenario + "," + std::to_string(n) + "," +
             std::to_string(dim) + "," + std::to_string(a.k) + "," + std::to_string(a.z) +
             "," + fmt(a.alpha) + "," + fmt(report.power) + "," + fmt(report.std_err) + "\n";
      curve.push_back({sweep_n ? n : dim, report.power, report.std_err});
    }
  }

  write_text_file(a.out, csv);
  record.outputs.push_back(a.out);

  if (!a.curve_out.empty()) {
    std::sort(curve.begin(), curve.end(),
              [](const CurveRow& l, const CurveRow& r) { return l.x < r.x; });
    std::string curve_csv = std::string(sweep_n ? "N" : "d") + ",power,std_err\n";
    for (const auto& row : curve) {
      curve_csv += std::to_string(row.x) + "," + fmt(row.power) + "," + fmt(row.std_err) + "\n";
    }
    write_text_file(a.curve_out, curve_csv);
    record.outputs.push_back(a.curve_out);
  }
  record.write(a.out + ".manifest.json");
  std::cout << csv;
  return 0;
}

// ---------------------------------------------------------------------------
// noisy
// ---------------------------------------------------------------------------

struct NoisyArgs {
  std::string config;
  std::size_t n = 5000;
  std::size_t n_test = 2000;
  int classes = 10;
  std::size_t d = 10;
  double separation = 4.0;
  double noise_rate = 0.2;
  std::string flip_mode = "symmetry";
  std::string gammas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7";
  std::string hidden = "64,64";
  int epochs = 150;
  int retrain_epochs = 60;
  int batch = 128;
  double lr = 1e-3;
  std::string optimizer = "adam";
  std::uint64_t seed = 1;
  std::string out;
  std::string curve_out;
};

int run_noisy(const NoisyArgs& a) {
  if (a.out.empty()) throw ConfigError("config: field 'out' is required");
  rdiv::CaseStudyConfig cfg = rdiv::default_case_study_config();
  cfg.n_train = a.n;
  cfg.n_test = a.n_test;
  cfg.classes = a.classes;
  cfg.dim = a.d;
  cfg.separation = a.separation;
  cfg.noise_rate = a.noise_rate;
  if (a.flip_mode == "symmetry") {
    cfg.flip_mode = rdiv::FlipMode::Symmetry;
  } else if (a.flip_mode == "pair") {
    cfg.flip_mode = rdiv::FlipMode::Pair;
  } else {
    throw ConfigError("config: field 'flip_mode' must be symmetry or pair");
  }
  cfg.gammas = parse_double_list(a.gammas, "gammas");
  for (double g : cfg.gammas) {
    if (!(g > 0.0 && g < 1.0)) throw ConfigError("config: field 'gammas' entries must lie in (0, 1)");
  }
  if (!(a.noise_rate >= 0.0 && a.noise_rate < 1.0)) {
    throw ConfigError("config: field 'noise_rate' must lie in [0, 1)");
  }
  rdiv::MlpConfig mlp;
  mlp.hidden = parse_int_list(a.hidden, "hidden");
  mlp.epochs = a.epochs;
  mlp.batch = a.batch;
  mlp.learning_rate = a.lr;
  if (a.optimizer == "adam") {
    mlp.optimizer = rdiv::OptimizerKind::Adam;
  } else if (a.optimizer == "sgd") {
    mlp.optimizer = rdiv::OptimizerKind::Sgd;
  } else {
    throw ConfigError("config: field 'optimizer' must be adam or sgd");
  }
  cfg.model = rdiv::ModelSpec::mlp_classifier(mlp);
  cfg.retrain_epochs = a.retrain_epochs;
  cfg.seed = a.seed;

  RunRecord record;
  record.command = "noisy";
  record.seed = a.seed;
  record.config = {{"n", a.n},
                   {"n_test", a.n_test},
                   {"classes", a.classes},
                   {"d", a.d},
                   {"separation", a.separation},
                   {"noise_rate", a.noise_rate},
                   {"flip_mode", a.flip_mode},
                   {"gammas", a.gammas},
                   {"hidden", a.hidden},
                   {"epochs", a.epochs},
                   {"retrain_epochs", a.retrain_epochs},
                   {"batch", a.batch},
                   {"lr", a.lr},
                   {"optimizer", a.optimizer},
                   {"seed", a.seed},
                   {"out", a.out},
                   {"curve_out", a.curve_out}};

  const auto result = rdiv::run_case_study(cfg);

  std::string csv =
      "gamma,pretrained_acc,retrained_acc,precision_clean,recall_clean,precision_noisy,"
      "recall_noisy,discrepancy\n";
  for (const auto& r : result.reports) {
    csv += fmt(r.gamma) + "," + fmt(r.pretrained_acc) + "," + fmt(r.retrained_acc) + "," +
           fmt(r.detection.precision_clean) + "," + fmt(r.detection.recall_clean) + "," +
           fmt(r.detection.precision_noisy) + "," + fmt(r.detection.recall_noisy) + "," +
           fmt(r.discrepancy) + "\n";
  }
  write_text_file(a.out, csv);
  record.outputs.push_back(a.out);

  if (!a.curve_out.empty()) {
    std::string curve = "phase,gamma,epoch,loss\n";
    for (std::size_t e = 0; e < result.pretrain_log.epoch_loss.size(); ++e) {
      curve += "pretrain,," + std::to_string(e) + "," + fmt(result.pretrain_log.epoch_loss[e]) +
               "\n";
    }
    for (std::size_t g = 0; g < result.retrain_logs.size(); ++g) {
      for (std::size_t e = 0; e < result.retrain_logs[g].epoch_loss.size(); ++e) {
        curve += "retrain," + fmt(cfg.gammas[g]) + "," + std::to_string(e) + "," +
                 fmt(result.retrain_logs[g].epoch_loss[e]) + "\n";
      }
    }
    write_text_file(a.curve_out, curve);
    record.outputs.push_back(a.curve_out);
  }
  record.write(a.out + ".manifest.json");
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-oriented two-sample discrepancy toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  EstimateArgs est;
  PowerArgs power;
  PowerArgs calib;
  NoisyArgs noisy;

  using Bindings = std::vector<std::pair<const CLI::Option*, std::string>>;
  Bindings gen_bind, est_bind, power_bind, calib_bind, noisy_bind;

  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset file");
  gen_cmd->add_option("--config", gen.config, "JSON config file; flags win");
  gen_bind.emplace_back(gen_cmd->add_option("--generator", gen.generator,
                                            "blob|hdgm|gauss-classes"),
                        "generator");
  gen_bind.emplace_back(gen_cmd->add_option("--side", gen.side, "P|Q"), "side");
  gen_bind.emplace_back(gen_cmd->add_option("--n", gen.n, "sample count"), "n");
  gen_bind.emplace_back(gen_cmd->add_option("--d", gen.d, "dimension"), "d");
  gen_bind.emplace_back(gen_cmd->add_option("--classes", gen.classes, "class count"), "classes");
  gen_bind.emplace_back(gen_cmd->add_option("--separation", gen.separation, "class separation"),
                        "separation");
  gen_bind.emplace_back(gen_cmd->add_option("--seed", gen.seed, "master seed"), "seed");
  gen_bind.emplace_back(gen_cmd->add_option("--out", gen.out, "output file"), "out");
  gen_bind.emplace_back(gen_cmd->add_option("--format", gen.format, "csv|bin"), "format");

  auto* est_cmd = app.add_subcommand("estimate", "one divergence estimate from dataset files");
  est_cmd->add_option("--config", est.config, "JSON config file; flags win");
  est_bind.emplace_back(est_cmd->add_option("--estimator", est.estimator,
                                            "rdiv|hdiv|mmd|c2st-s|c2st-l"),
                        "estimator");
  est_bind.emplace_back(est_cmd->add_option("--p", est.p_path, "dataset file for side P"), "p");
  est_bind.emplace_back(est_cmd->add_option("--q", est.q_path, "dataset file for side Q"), "q");
  est_bind.emplace_back(est_cmd->add_option("--phi", est.phi, "hdiv combiner: mean|max"), "phi");
  est_bind.emplace_back(est_cmd->add_option("--seed", est.seed, "master seed"), "seed");
  est_bind.emplace_back(est_cmd->add_option("--out", est.out, "output CSV (also printed)"),
                        "out");
  add_model_flags(est_cmd, est.model, est_bind);

  auto add_power_flags = [](CLI::App* cmd, PowerArgs& a, Bindings& bind) {
    cmd->add_option("--config", a.config, "JSON config file; flags win");
    bind.emplace_back(cmd->add_option("--scenario", a.scenario, "scenario name"), "scenario");
    bind.emplace_back(cmd->add_option("--estimator", a.estimator,
                                      "rdiv|hdiv|mmd|c2st-s|c2st-l"),
                      "estimator");
    bind.emplace_back(cmd->add_option("--phi", a.phi, "hdiv combiner: mean|max"), "phi");
    bind.emplace_back(cmd->add_option("--n", a.n_list, "per-side sample counts, comma list"),
                      "n");
    bind.emplace_back(cmd->add_option("--d", a.d_list, "dimensions, comma list (0 = default)"),
                      "d");
    bind.emplace_back(cmd->add_option("--k", a.k, "trials"), "k");
    bind.emplace_back(cmd->add_option("--z", a.z, "permutation replicas"), "z");
    bind.emplace_back(cmd->add_option("--alpha", a.alpha, "significance level"), "alpha");
    bind.emplace_back(cmd->add_option("--seed", a.seed, "master seed"), "seed");
    bind.emplace_back(cmd->add_option("--threads", a.threads, "worker threads"), "threads");
    bind.emplace_back(cmd->add_option("--out", a.out, "output CSV"), "out");
    bind.emplace_back(cmd->add_option("--curve-out", a.curve_out, "power-curve CSV"),
                      "curve_out");
  };

  auto* power_cmd = app.add_subcommand("power", "average test power over K permutation tests");
  add_power_flags(power_cmd, power, power_bind);
  ModelFlags& power_model = power.model;
  add_model_flags(power_cmd, power_model, power_bind);

  auto* calib_cmd =
      app.add_subcommand("calibrate", "empirical Type-I rate on a null scenario");
  add_power_flags(calib_cmd, calib, calib_bind);
  add_model_flags(calib_cmd, calib.model, calib_bind);

  auto* noisy_cmd = app.add_subcommand("noisy", "noisy-label case study gamma sweep");
  noisy_cmd->add_option("--config", noisy.config, "JSON config file; flags win");
  noisy_bind.emplace_back(noisy_cmd->add_option("--n", noisy.n, "training samples"), "n");
  noisy_bind.emplace_back(noisy_cmd->add_option("--n-test", noisy.n_test, "clean test samples"),
                          "n_test");
  noisy_bind.emplace_back(noisy_cmd->add_option("--classes", noisy.classes, "class count"),
                          "classes");
  noisy_bind.emplace_back(noisy_cmd->add_option("--d", noisy.d, "dimension"), "d");
  noisy_bind.emplace_back(
      noisy_cmd->add_option("--separation", noisy.separation, "class separation"), "separation");
  noisy_bind.emplace_back(
      noisy_cmd->add_option("--noise-rate", noisy.noise_rate, "label flip rate"), "noise_rate");
  noisy_bind.emplace_back(noisy_cmd->add_option("--flip-mode", noisy.flip_mode, "symmetry|pair"),
                          "flip_mode");
  noisy_bind.emplace_back(noisy_cmd->add_option("--gammas", noisy.gammas,
                                                "estimated noise rates, comma list"),
                          "gammas");
  noisy_bind.emplace_back(noisy_cmd->add_option("--hidden", noisy.hidden, "MLP hidden widths"),
                          "hidden");
  noisy_bind.emplace_back(noisy_cmd->add_option("--epochs", noisy.epochs, "pretraining epochs"),
                          "epochs");
  noisy_bind.emplace_back(
      noisy_cmd->add_option("--retrain-epochs", noisy.retrain_epochs, "retraining epochs"),
      "retrain_epochs");
  noisy_bind.emplace_back(noisy_cmd->add_option("--batch", noisy.batch, "mini-batch size"),
                          "batch");
  noisy_bind.emplace_back(noisy_cmd->add_option("--lr", noisy.lr, "learning rate"), "lr");
  noisy_bind.emplace_back(noisy_cmd->add_option("--optimizer", noisy.optimizer, "adam|sgd"),
                          "optimizer");
  noisy_bind.emplace_back(noisy_cmd->add_option("--seed", noisy.seed, "master seed"), "seed");
  noisy_bind.emplace_back(noisy_cmd->add_option("--out", noisy.out, "output CSV"), "out");
  noisy_bind.emplace_back(
      noisy_cmd->add_option("--curve-out", noisy.curve_out, "per-epoch loss CSV"), "curve_out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  // Overlay the JSON config under the parsed flags, then dispatch.
  try {
    auto overlay = [](const std::string& path, auto&& assign) {
      ConfigLayer layer;
      if (!path.empty()) layer.load(path);
      assign(layer);
      layer.reject_unknown_keys();
    };

    if (gen_cmd->parsed()) {
      overlay(gen.config, [&](ConfigLayer& c) {
        c.apply(gen_bind[0].first, gen.generator, "generator");
        c.apply(gen_bind[1].first, gen.side, "side");
        c.apply(gen_bind[2].first, gen.n, "n");
        c.apply(gen_bind[3].first, gen.d, "d");
        c.apply(gen_bind[4].first, gen.classes, "classes");
        c.apply(gen_bind[5].first, gen.separation, "separation");
        c.apply(gen_bind[6].first, gen.seed, "seed");
        c.apply(gen_bind[7].first, gen.out, "out");
        c.apply(gen_bind[8].first, gen.format, "format");
      });
      return run_gen(gen);
    }
    if (est_cmd->parsed()) {
      overlay(est.config, [&](ConfigLayer& c) {
        c.apply(est_bind[0].first, est.estimator, "estimator");
        c.apply(est_bind[1].first, est.p_path, "p");
        c.apply(est_bind[2].first, est.q_path, "q");
        c.apply(est_bind[3].first, est.phi, "phi");
        c.apply(est_bind[4].first, est.seed, "seed");
        c.apply(est_bind[5].first, est.out, "out");
        c.apply(est_bind[6].first, est.model.model, "model");
        c.apply(est_bind[7].first, est.model.hidden, "hidden");
        c.apply(est_bind[8].first, est.model.epochs, "epochs");
        c.apply(est_bind[9].first, est.model.batch, "batch");
        c.apply(est_bind[10].first, est.model.lr, "lr");
        c.apply(est_bind[11].first, est.model.optimizer, "optimizer");
        c.apply(est_bind[12].first, est.model.bandwidth, "bandwidth");
        c.apply(est_bind[13].first, est.model.loss_clip, "loss_clip");
      });
      return run_estimate(est);
    }
    auto apply_power = [&](PowerArgs& a, const Bindings& bind, ConfigLayer& c) {
      c.apply(bind[0].first, a.scenario, "scenario");
      c.apply(bind[1].first, a.estimator, "estimator");
      c.apply(bind[2].first, a.phi, "phi");
      c.apply(bind[3].first, a.n_list, "n");
      c.apply(bind[4].first, a.d_list, "d");
      c.apply(bind[5].first, a.k, "k");
      c.apply(bind[6].first, a.z, "z");
      c.apply(bind[7].first, a.alpha, "alpha");
      c.apply(bind[8].first, a.seed, "seed");
      c.apply(bind[9].first, a.threads, "threads");
      c.apply(bind[10].first, a.out, "out");
      c.apply(bind[11].first, a.curve_out, "curve_out");
      c.apply(bind[12].first, a.model.model, "model");
      c.apply(bind[13].first, a.model.hidden, "hidden");
      c.apply(bind[14].first, a.model.epochs, "epochs");
      c.apply(bind[15].first, a.model.batch, "batch");
      c.apply(bind[16].first, a.model.lr, "lr");
      c.apply(bind[17].first, a.model.optimizer, "optimizer");
      c.apply(bind[18].first, a.model.bandwidth, "bandwidth");
      c.apply(bind[19].first, a.model.loss_clip, "loss_clip");
    };
    if (power_cmd->parsed()) {
      overlay(power.config,
              [&](ConfigLayer& c) { apply_power(power, power_bind, c); });
      return run_power(power, /*calibrate=*/false);
    }
    if (calib_cmd->parsed()) {
      overlay(calib.config,
              [&](ConfigLayer& c) { apply_power(calib, calib_bind, c); });
      return run_power(calib, /*calibrate=*/true);
    }
    if (noisy_cmd->parsed()) {
      overlay(noisy.config, [&](ConfigLayer& c) {
        c.apply(noisy_bind[0].first, noisy.n, "n");
        c.apply(noisy_bind[1].first, noisy.n_test, "n_test");
        c.apply(noisy_bind[2].first, noisy.classes, "classes");
        c.apply(noisy_bind[3].first, noisy.d, "d");
        c.apply(noisy_bind[4].first, noisy.separation, "separation");
        c.apply(noisy_bind[5].first, noisy.noise_rate, "noise_rate");
        c.apply(noisy_bind[6].first, noisy.flip_mode, "flip_mode");
        c.apply(noisy_bind[7].first, noisy.gammas, "gammas");
        c.apply(noisy_bind[8].first, noisy.hidden, "hidden");
        c.apply(noisy_bind[9].first, noisy.epochs, "epochs");
        c.apply(noisy_bind[10].first, noisy.retrain_epochs, "retrain_epochs");
        c.apply(noisy_bind[11].first, noisy.batch, "batch");
        c.apply(noisy_bind[12].first, noisy.lr, "lr");
        c.apply(noisy_bind[13].first, noisy.optimizer, "optimizer");
        c.apply(noisy_bind[14].first, noisy.seed, "seed");
        c.apply(noisy_bind[15].first, noisy.out, "out");
        c.apply(noisy_bind[16].first, noisy.curve_out, "curve_out");
      });
      return run_noisy(noisy);
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
