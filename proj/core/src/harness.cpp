#include "maelab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "maelab/io.hpp"
#include "maelab/linear_lab.hpp"
#include "maelab/shallow_net.hpp"

namespace maelab {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kIdentityTolerance = 1e-10;
constexpr double kBoundSlack = 1e-9;
constexpr double kCovarianceResidualCeiling = 1e-2;

const char* kProbeSchema = "maelab probe csv v1";
const char* kProp1Schema = "maelab prop1 csv v1";
const char* kBoundsSchema = "maelab bounds csv v1";
const char* kTrainSchema = "maelab train csv v1";
const char* kMetricSchema = "maelab metric csv v1";

}  // namespace

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::kLinearProbeSuite: return "linear_probe_suite";
    case Experiment::kProp1Verify: return "prop1_verify";
    case Experiment::kBoundsCheck: return "bounds_check";
    case Experiment::kCovarianceCheck: return "covariance_check";
    case Experiment::kShallowProbeSuite: return "shallow_probe_suite";
    case Experiment::kRcMaeTrain: return "rcmae_train";
    case Experiment::kRcMaeProbeSuite: return "rcmae_probe_suite";
    case Experiment::kSVsDCompare: return "s_vs_d_compare";
  }
  return "?";
}

std::optional<Experiment> experiment_from_name(const std::string& name) {
  for (Experiment e : {Experiment::kLinearProbeSuite, Experiment::kProp1Verify,
                       Experiment::kBoundsCheck, Experiment::kCovarianceCheck,
                       Experiment::kShallowProbeSuite, Experiment::kRcMaeTrain,
                       Experiment::kRcMaeProbeSuite, Experiment::kSVsDCompare}) {
    if (name == experiment_name(e)) return e;
  }
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ContractViolation("config: at least one seed required");
  mixture.validate();
  if (linear.iterations <= 0) throw ContractViolation("config: linear.iterations must be positive");
  if (linear.batch_size == 0) throw ContractViolation("config: linear.batch_size must be positive");
  if (linear.lr <= 0.0) throw ContractViolation("config: linear.lr must be positive");
  if (linear.alpha <= 0.0 || linear.alpha >= 1.0)
    throw ContractViolation("config: linear.alpha must lie in (0, 1)");
  if (linear.mask_ratio < 0.0 || linear.mask_ratio > 1.0)
    throw ContractViolation("config: linear.mask_ratio must lie in [0, 1]");
  if (linear.probe_every <= 0) throw ContractViolation("config: linear.probe_every must be positive");
  deep.corpus.validate();
  deep.rcmae.validate();
  if (deep.shape.n_tokens != deep.corpus.n_tokens())
    throw ContractViolation("config: mae.n_tokens must match corpus geometry");
  if (deep.shape.token_dim != deep.corpus.token_dim())
    throw ContractViolation("config: mae.token_dim must match corpus geometry");
  if (deep.warmup_steps < 0) throw ContractViolation("config: deep.warmup_steps must be >= 0");
}

std::string ExperimentConfig::resolved_out_dir() const {
  if (!out_dir.empty()) return out_dir;
  if (const char* env = std::getenv("MAELAB_OUT"); env && *env) return env;
  return ".";
}

namespace {

std::string seeds_to_string(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

std::string generator_name(ImageGenerator g) {
  switch (g) {
    case ImageGenerator::kGaussianBlobs: return "gaussian_blobs";
    case ImageGenerator::kSinusoidalTextures: return "sinusoidal_textures";
    case ImageGenerator::kMixed: return "mixed";
  }
  return "?";
}

}  // namespace

std::map<std::string, std::string> ExperimentConfig::flat() const {
  std::map<std::string, std::string> kv;
  kv["experiment"] = experiment_name(experiment);
  kv["seeds"] = seeds_to_string(seeds);
  kv["out_dir"] = resolved_out_dir();
  kv["emit"] = std::string(emit_csv ? "csv" : "") +
               (emit_csv && emit_json ? "," : "") + (emit_json ? "json" : "");
  kv["data.dim"] = std::to_string(mixture.dim);
  kv["data.clusters"] = std::to_string(mixture.n_clusters);
  kv["data.points_per_cluster"] = std::to_string(mixture.points_per_cluster);
  kv["data.mean_low"] = format_double(mixture.mean_range.first);
  kv["data.mean_high"] = format_double(mixture.mean_range.second);
  kv["data.wishart_low"] = format_double(mixture.wishart_scale_range.first);
  kv["data.wishart_high"] = format_double(mixture.wishart_scale_range.second);
  kv["data.wishart_dof"] = std::to_string(mixture.wishart_dof);
  kv["data.center"] = mixture.center ? "true" : "false";
  kv["linear.iterations"] = std::to_string(linear.iterations);
  kv["linear.batch_size"] = std::to_string(linear.batch_size);
  kv["linear.lr"] = format_double(linear.lr);
  kv["linear.momentum"] = format_double(linear.momentum);
  kv["linear.alpha"] = format_double(linear.alpha);
  kv["linear.mask_ratio"] = format_double(linear.mask_ratio);
  kv["linear.mode"] = linear.use_momentum ? "momentum" : "plain_sgd";
  kv["linear.with_bias"] = linear.with_bias ? "true" : "false";
  kv["linear.init_scale"] = format_double(linear.init_scale);
  kv["linear.probe_every"] = std::to_string(linear.probe_every);
  kv["linear.probe_batch"] = std::to_string(linear.probe_batch);
  kv["shallow.hidden"] = std::to_string(shallow.hidden);
  kv["shallow.activation"] = shallow.activation == Activation::kTanh ? "tanh" : "gelu";
  kv["shallow.init_scale"] = format_double(shallow.init_scale);
  kv["covariance.estimate_samples"] = std::to_string(covariance.estimate_samples);
  kv["covariance.residual_samples"] = std::to_string(covariance.residual_samples);
  kv["covariance.trajectory_epochs"] = std::to_string(covariance.trajectory_epochs);
  kv["corpus.n_images"] = std::to_string(deep.corpus.n_images);
  kv["corpus.channels"] = std::to_string(deep.corpus.channels);
  kv["corpus.height"] = std::to_string(deep.corpus.height);
  kv["corpus.width"] = std::to_string(deep.corpus.width);
  kv["corpus.patch"] = std::to_string(deep.corpus.patch_size);
  kv["corpus.generator"] = generator_name(deep.corpus.generator);
  kv["mae.embed"] = std::to_string(deep.shape.embed);
  kv["mae.enc_blocks"] = std::to_string(deep.shape.enc_blocks);
  kv["mae.dec_blocks"] = std::to_string(deep.shape.dec_blocks);
  kv["mae.enc_mlp_hidden"] = std::to_string(deep.shape.enc_mlp_hidden);
  kv["mae.dec_mlp_hidden"] = std::to_string(deep.shape.dec_mlp_hidden);
  kv["rcmae.mask_ratio"] = format_double(deep.rcmae.mask_ratio);
  kv["rcmae.mode"] = rcmae_mode_name(deep.rcmae.mode);
  kv["rcmae.alpha"] = format_double(deep.rcmae.alpha);
  kv["rcmae.lr"] = format_double(deep.rcmae.lr);
  kv["rcmae.momentum"] = format_double(deep.rcmae.momentum);
  kv["rcmae.weight_decay"] = format_double(deep.rcmae.weight_decay);
  kv["rcmae.batch_size"] = std::to_string(deep.rcmae.batch_size);
  kv["rcmae.iterations"] = std::to_string(deep.rcmae.iterations);
  kv["rcmae.consistency_weight"] = format_double(deep.rcmae.consistency_weight);
  kv["deep.warmup_steps"] = std::to_string(deep.warmup_steps);
  kv["deep.probe_rounds"] = std::to_string(deep.probe_rounds);
  kv["deep.probe_batch"] = std::to_string(deep.probe_batch);
  return kv;
}

ExperimentConfig default_config(Experiment e) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  switch (e) {
    case Experiment::kProp1Verify:
    case Experiment::kBoundsCheck:
      // The history expansion holds for plain SGD only.
      cfg.linear.use_momentum = false;
      break;
    case Experiment::kCovarianceCheck:
      cfg.linear.use_momentum = false;
      cfg.linear.with_bias = false;
      cfg.linear.iterations = 800;
      break;
    case Experiment::kSVsDCompare:
      cfg.deep.rcmae.alpha = 0.99;
      cfg.deep.rcmae.iterations = 800;
      break;
    default:
      break;
  }
  return cfg;
}

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ContractViolation("config key '" + key + "': expected true/false, got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ContractViolation("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ContractViolation("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  const long v = parse_long(key, value);
  if (v < 0) throw ContractViolation("config key '" + key + "': must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  std::size_t e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "experiment") {
    auto e = experiment_from_name(value);
    if (!e) throw ContractViolation("config key 'experiment': unknown experiment '" + value + "'");
    cfg.experiment = *e;
  } else if (key == "seeds" || key == "seed") {
    std::vector<std::uint64_t> seeds;
    for (const std::string& tok : split(value, ',')) {
      const std::string t = trim(tok);
      if (t.empty()) continue;
      seeds.push_back(static_cast<std::uint64_t>(parse_long(key, t)));
    }
    if (seeds.empty()) throw ContractViolation("config key 'seeds': at least one seed required");
    cfg.seeds = std::move(seeds);
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "emit") {
    cfg.emit_csv = false;
    cfg.emit_json = false;
    for (const std::string& tok : split(value, ',')) {
      const std::string t = trim(tok);
      if (t == "csv") cfg.emit_csv = true;
      else if (t == "json") cfg.emit_json = true;
      else if (t == "summary") cfg.emit_json = true;
      else if (!t.empty())
        throw ContractViolation("config key 'emit': unknown format '" + t + "'");
    }
  } else if (key == "data.dim") {
    cfg.mixture.dim = parse_size(key, value);
  } else if (key == "data.clusters") {
    cfg.mixture.n_clusters = parse_size(key, value);
  } else if (key == "data.points_per_cluster") {
    cfg.mixture.points_per_cluster = parse_size(key, value);
  } else if (key == "data.mean_low") {
    cfg.mixture.mean_range.first = parse_double(key, value);
  } else if (key == "data.mean_high") {
    cfg.mixture.mean_range.second = parse_double(key, value);
  } else if (key == "data.wishart_low") {
    cfg.mixture.wishart_scale_range.first = parse_double(key, value);
  } else if (key == "data.wishart_high") {
    cfg.mixture.wishart_scale_range.second = parse_double(key, value);
  } else if (key == "data.wishart_dof") {
    cfg.mixture.wishart_dof = parse_size(key, value);
  } else if (key == "data.center") {
    cfg.mixture.center = parse_bool(key, value);
  } else if (key == "linear.iterations") {
    cfg.linear.iterations = parse_long(key, value);
  } else if (key == "linear.batch_size") {
    cfg.linear.batch_size = parse_size(key, value);
  } else if (key == "linear.lr") {
    cfg.linear.lr = parse_double(key, value);
  } else if (key == "linear.momentum") {
    cfg.linear.momentum = parse_double(key, value);
  } else if (key == "linear.alpha") {
    cfg.linear.alpha = parse_double(key, value);
  } else if (key == "linear.mask_ratio") {
    const double r = parse_double(key, value);
    if (r < 0.0 || r > 1.0)
      throw ContractViolation("config key 'linear.mask_ratio': must lie in [0, 1]");
    cfg.linear.mask_ratio = r;
  } else if (key == "linear.mode") {
    if (value == "momentum") cfg.linear.use_momentum = true;
    else if (value == "plain_sgd") cfg.linear.use_momentum = false;
    else
      throw ContractViolation("config key 'linear.mode': expected plain_sgd or momentum");
  } else if (key == "linear.with_bias") {
    cfg.linear.with_bias = parse_bool(key, value);
  } else if (key == "linear.init_scale") {
    cfg.linear.init_scale = parse_double(key, value);
  } else if (key == "linear.probe_every") {
    cfg.linear.probe_every = parse_long(key, value);
  } else if (key == "linear.probe_batch") {
    cfg.linear.probe_batch = parse_size(key, value);
  } else if (key == "shallow.hidden") {
    cfg.shallow.hidden = parse_size(key, value);
  } else if (key == "shallow.activation") {
    if (value == "tanh") cfg.shallow.activation = Activation::kTanh;
    else if (value == "gelu") cfg.shallow.activation = Activation::kGelu;
    else throw ContractViolation("config key 'shallow.activation': expected tanh or gelu");
  } else if (key == "shallow.init_scale") {
    cfg.shallow.init_scale = parse_double(key, value);
  } else if (key == "covariance.estimate_samples") {
    cfg.covariance.estimate_samples = parse_size(key, value);
  } else if (key == "covariance.residual_samples") {
    cfg.covariance.residual_samples = parse_size(key, value);
  } else if (key == "covariance.trajectory_epochs") {
    cfg.covariance.trajectory_epochs = parse_long(key, value);
  } else if (key == "corpus.n_images") {
    cfg.deep.corpus.n_images = parse_size(key, value);
  } else if (key == "corpus.channels") {
    cfg.deep.corpus.channels = parse_size(key, value);
  } else if (key == "corpus.height") {
    cfg.deep.corpus.height = parse_size(key, value);
  } else if (key == "corpus.width") {
    cfg.deep.corpus.width = parse_size(key, value);
  } else if (key == "corpus.patch") {
    cfg.deep.corpus.patch_size = parse_size(key, value);
  } else if (key == "corpus.generator") {
    if (value == "gaussian_blobs") cfg.deep.corpus.generator = ImageGenerator::kGaussianBlobs;
    else if (value == "sinusoidal_textures")
      cfg.deep.corpus.generator = ImageGenerator::kSinusoidalTextures;
    else if (value == "mixed") cfg.deep.corpus.generator = ImageGenerator::kMixed;
    else
      throw ContractViolation(
          "config key 'corpus.generator': expected gaussian_blobs, sinusoidal_textures or mixed");
  } else if (key == "mae.embed") {
    cfg.deep.shape.embed = parse_size(key, value);
  } else if (key == "mae.enc_blocks") {
    cfg.deep.shape.enc_blocks = parse_size(key, value);
  } else if (key == "mae.dec_blocks") {
    cfg.deep.shape.dec_blocks = parse_size(key, value);
  } else if (key == "mae.enc_mlp_hidden") {
    cfg.deep.shape.enc_mlp_hidden = parse_size(key, value);
  } else if (key == "mae.dec_mlp_hidden") {
    cfg.deep.shape.dec_mlp_hidden = parse_size(key, value);
  } else if (key == "rcmae.mask_ratio") {
    const double r = parse_double(key, value);
    if (r <= 0.0 || r >= 1.0)
      throw ContractViolation("config key 'rcmae.mask_ratio': must lie in (0, 1)");
    cfg.deep.rcmae.mask_ratio = r;
  } else if (key == "rcmae.mode") {
    if (value == "mae_only") cfg.deep.rcmae.mode = RcMaeMode::kMaeOnly;
    else if (value == "rcmae_s") cfg.deep.rcmae.mode = RcMaeMode::kRcMaeSame;
    else if (value == "rcmae_d") cfg.deep.rcmae.mode = RcMaeMode::kRcMaeDifferent;
    else
      throw ContractViolation("config key 'rcmae.mode': expected mae_only, rcmae_s or rcmae_d");
  } else if (key == "rcmae.alpha") {
    cfg.deep.rcmae.alpha = parse_double(key, value);
  } else if (key == "rcmae.lr") {
    cfg.deep.rcmae.lr = parse_double(key, value);
  } else if (key == "rcmae.momentum") {
    cfg.deep.rcmae.momentum = parse_double(key, value);
  } else if (key == "rcmae.weight_decay") {
    cfg.deep.rcmae.weight_decay = parse_double(key, value);
  } else if (key == "rcmae.batch_size") {
    cfg.deep.rcmae.batch_size = parse_size(key, value);
  } else if (key == "rcmae.iterations") {
    cfg.deep.rcmae.iterations = parse_long(key, value);
  } else if (key == "rcmae.consistency_weight") {
    cfg.deep.rcmae.consistency_weight = parse_double(key, value);
  } else if (key == "deep.warmup_steps") {
    cfg.deep.warmup_steps = parse_long(key, value);
  } else if (key == "deep.probe_rounds") {
    cfg.deep.probe_rounds = parse_long(key, value);
  } else if (key == "deep.probe_batch") {
    cfg.deep.probe_batch = parse_size(key, value);
  } else {
    throw ContractViolation("config: unknown key '" + key + "'");
  }

  // Geometry-derived fields follow the corpus.
  cfg.deep.shape.n_tokens = cfg.deep.corpus.n_tokens();
  cfg.deep.shape.token_dim = cfg.deep.corpus.token_dim();
}

namespace {

void flatten_json(const ordered_json& j, const std::string& prefix,
                  std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten_json(value, full, out);
    } else if (value.is_string()) {
      out.emplace_back(full, value.get<std::string>());
    } else {
      out.emplace_back(full, value.dump());
    }
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractViolation("config: cannot open " + path);
  std::stringstream buffer;
  buffer << f.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::pair<std::string, std::string>> kvs;
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    ordered_json j = ordered_json::parse(text);
    flatten_json(j, "", kvs);
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw ContractViolation("config: malformed line (expected key=value): " + t);
      kvs.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
  }

  Experiment exp = Experiment::kLinearProbeSuite;
  for (const auto& [k, v] : kvs) {
    if (k == "experiment") {
      auto e = experiment_from_name(v);
      if (!e) throw ContractViolation("config key 'experiment': unknown experiment '" + v + "'");
      exp = *e;
    }
  }
  ExperimentConfig cfg = default_config(exp);
  for (const auto& [k, v] : kvs) apply_setting(cfg, k, v);
  return cfg;
}

// ===========================================================================
// experiment workers
// ===========================================================================

namespace {

struct SeedOutput {
  SeedAggregate aggregate;
  std::vector<std::string> csv_paths;
  bool hard_failed = false;
  std::vector<std::string> hard_failures;
};

std::string csv_path(const ExperimentConfig& cfg, const std::string& stem,
                     std::uint64_t seed) {
  return cfg.resolved_out_dir() + "/" + stem + "_seed" + std::to_string(seed) + ".csv";
}

std::vector<std::string> probe_columns() {
  return {"step", "case", "norm_recon", "norm_cons", "cos_prev_full_vs_cons",
          "cos_recon_vs_cons", "input_similarity"};
}

void write_probe_row(CsvWriter& csv, long step, const ProbeRecord& rec) {
  csv.row({std::to_string(step), probe_case_name(rec.probe_case),
           format_double(rec.norm_recon), format_double(rec.norm_cons),
           format_double(rec.cos_prev_full_vs_cons), format_double(rec.cos_recon_vs_cons),
           format_double(rec.input_similarity)});
}

struct StatAccumulator {
  std::size_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double v) {
    n += 1;
    sum += v;
    sum_sq += v * v;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double stddev() const {
    if (n == 0) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - m * m);
    return std::sqrt(var);
  }
};

struct CaseAccumulators {
  StatAccumulator norm_recon, norm_cons, cos_prev, cos_rc, input_sim;

  void add(const ProbeRecord& rec) {
    norm_recon.add(rec.norm_recon);
    norm_cons.add(rec.norm_cons);
    cos_prev.add(rec.cos_prev_full_vs_cons);
    cos_rc.add(rec.cos_recon_vs_cons);
    input_sim.add(rec.input_similarity);
  }
  CaseAggregate finish() const {
    CaseAggregate agg;
    agg.count = norm_recon.n;
    agg.norm_recon_mean = norm_recon.mean();
    agg.norm_recon_std = norm_recon.stddev();
    agg.norm_cons_mean = norm_cons.mean();
    agg.norm_cons_std = norm_cons.stddev();
    agg.cos_prev_mean = cos_prev.mean();
    agg.cos_prev_std = cos_prev.stddev();
    agg.cos_rc_mean = cos_rc.mean();
    agg.cos_rc_std = cos_rc.stddev();
    agg.input_sim_mean = input_sim.mean();
    agg.input_sim_std = input_sim.stddev();
    return agg;
  }
};

// One batch gradient step on the linear pair; returns the applied batch-mean
// gradient.
DenseMatrix linear_train_step(LinearPair& pair, const VectorDataset& data,
                              const LinearSettings& settings, Rng& batch_rng,
                              Rng& mask_rng) {
  DenseMatrix grad(pair.student.rows, pair.student.cols, 0.0);
  for (std::size_t b = 0; b < settings.batch_size; ++b) {
    const DenseVector& x = data.points[batch_rng.next_below(data.size())];
    const MaskSpec mask = draw_mask(data.dim, settings.mask_ratio, mask_rng);
    const DenseVector in = pair.lift(apply_vector_mask(x, mask));
    add_scaled_in_place(grad, recon_grad(pair.student, in, x), 1.0);
    add_scaled_in_place(grad, cons_grad(pair.student, pair.teacher, in), 1.0);
  }
  scale_in_place(grad, 1.0 / static_cast<double>(settings.batch_size));
  sgd_step(pair, grad, settings.use_momentum);
  ema_update(pair);
  return grad;
}

DenseVector draw_probe_input(const VectorDataset& data, const LinearSettings& settings,
                             const LinearPair& pair, Rng& probe_rng) {
  const DenseVector& x = data.points[probe_rng.next_below(data.size())];
  const MaskSpec mask = draw_mask(data.dim, settings.mask_ratio, probe_rng);
  return pair.lift(apply_vector_mask(x, mask));
}

SeedOutput run_linear_probe_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  Rng root(seed);
  Rng data_rng = root.substream("data");
  Rng batch_rng = root.substream("batch");
  Rng mask_rng = root.substream("masks");
  Rng init_rng = root.substream("init");
  Rng probe_rng = root.substream("probes");

  const VectorDataset data = build_gaussian_mixture(cfg.mixture, data_rng);
  LinearPair pair = LinearPair::init(cfg.mixture.dim, cfg.linear.with_bias,
                                     cfg.linear.alpha, cfg.linear.lr,
                                     cfg.linear.momentum, init_rng,
                                     cfg.linear.init_scale);

  const std::string path = csv_path(cfg, "linear_probe", seed);
  CsvWriter csv(path, kProbeSchema, probe_columns());
  out.csv_paths.push_back(path);

  std::map<std::string, CaseAccumulators> acc;
  for (long it = 0; it < cfg.linear.iterations; ++it) {
    linear_train_step(pair, data, cfg.linear, batch_rng, mask_rng);
    if ((it + 1) % cfg.linear.probe_every != 0) continue;
    for (std::size_t p = 0; p < cfg.linear.probe_batch; ++p) {
      const DenseVector& x = data.points[probe_rng.next_below(data.size())];
      const DenseVector& x_other = data.points[probe_rng.next_below(data.size())];
      for (ProbeCase pc : {ProbeCase::kSame, ProbeCase::kSimilar, ProbeCase::kDifferent}) {
        const ProbeRecord rec = run_probe(pair, x, x_other, pc, cfg.linear.mask_ratio,
                                          cfg.linear.use_momentum, probe_rng);
        write_probe_row(csv, pair.step, rec);
        acc[probe_case_name(pc)].add(rec);
      }
    }
  }
  for (const auto& [name, a] : acc) out.aggregate.cases[name] = a.finish();
  return out;
}

SeedOutput run_prop1_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  Rng root(seed);
  Rng data_rng = root.substream("data");
  Rng batch_rng = root.substream("batch");
  Rng mask_rng = root.substream("masks");
  Rng init_rng = root.substream("init");
  Rng probe_rng = root.substream("probes");

  const VectorDataset data = build_gaussian_mixture(cfg.mixture, data_rng);
  LinearSettings settings = cfg.linear;
  settings.use_momentum = false;  // the identity requires plain SGD
  LinearPair pair = LinearPair::init(cfg.mixture.dim, settings.with_bias, settings.alpha,
                                     settings.lr, settings.momentum, init_rng,
                                     settings.init_scale);
  GradientHistory history(static_cast<std::size_t>(settings.iterations));

  const std::string path = csv_path(cfg, "prop1", seed);
  CsvWriter csv(path, kProp1Schema, {"step", "delta"});
  out.csv_paths.push_back(path);

  double max_delta = 0.0;
  for (long it = 0; it < settings.iterations; ++it) {
    const DenseMatrix grad = linear_train_step(pair, data, settings, batch_rng, mask_rng);
    history.record(pair.step - 1, grad);
    const DenseVector probe = draw_probe_input(data, settings, pair, probe_rng);
    const double delta = verify_history_identity(pair, history, probe);
    max_delta = std::max(max_delta, delta);
    csv.row({std::to_string(pair.step), format_double(delta)});
  }
  out.aggregate.scalars["max_delta"] = max_delta;
  if (max_delta > kIdentityTolerance) {
    out.hard_failed = true;
    out.hard_failures.push_back("seed " + std::to_string(seed) +
                                ": identity deviation " + format_double(max_delta) +
                                " exceeds " + format_double(kIdentityTolerance));
  }
  return out;
}

SeedOutput run_bounds_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  Rng root(seed);
  Rng data_rng = root.substream("data");
  Rng batch_rng = root.substream("batch");
  Rng mask_rng = root.substream("masks");
  Rng init_rng = root.substream("init");
  Rng probe_rng = root.substream("probes");

  const VectorDataset data = build_gaussian_mixture(cfg.mixture, data_rng);
  LinearSettings settings = cfg.linear;
  settings.use_momentum = false;
  LinearPair pair = LinearPair::init(cfg.mixture.dim, settings.with_bias, settings.alpha,
                                     settings.lr, settings.momentum, init_rng,
                                     settings.init_scale);
  GradientHistory history(static_cast<std::size_t>(settings.iterations));

  const std::string path = csv_path(cfg, "bounds", seed);
  CsvWriter csv(path, kBoundsSchema,
                {"step", "cons_lhs", "cons_rhs", "recon_lhs", "recon_rhs",
                 "cons_violation", "recon_violation"});
  out.csv_paths.push_back(path);

  long cons_violations = 0;
  long recon_violations = 0;
  for (long it = 0; it < settings.iterations; ++it) {
    const DenseMatrix grad = linear_train_step(pair, data, settings, batch_rng, mask_rng);
    history.record(pair.step - 1, grad);
    const DenseVector probe = draw_probe_input(data, settings, pair, probe_rng);
    const BoundCheck cons = check_cons_bound(pair, history, probe);
    const BoundCheck recon = check_recon_bound(pair, history, probe);
    const bool cons_bad = !cons.holds(kBoundSlack);
    const bool recon_bad = !recon.holds(kBoundSlack);
    cons_violations += cons_bad;
    recon_violations += recon_bad;
    csv.row({std::to_string(pair.step), format_double(cons.lhs), format_double(cons.rhs),
             format_double(recon.lhs), format_double(recon.rhs),
             cons_bad ? "1" : "0", recon_bad ? "1" : "0"});
  }
  out.aggregate.scalars["cons_violations"] = static_cast<double>(cons_violations);
  out.aggregate.scalars["recon_violations"] = static_cast<double>(recon_violations);
  if (cons_violations + recon_violations > 0) {
    out.hard_failed = true;
    out.hard_failures.push_back("seed " + std::to_string(seed) + ": " +
                                std::to_string(cons_violations + recon_violations) +
                                " bound violations");
  }
  return out;
}

SeedOutput run_covariance_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  Rng root(seed);
  Rng data_rng = root.substream("data");
  Rng mc_rng = root.substream("montecarlo");
  Rng batch_rng = root.substream("batch");
  Rng mask_rng = root.substream("masks");
  Rng init_rng = root.substream("init");

  const VectorDataset data = build_gaussian_mixture(cfg.mixture, data_rng);
  const CovarianceFixedPoint fp = covariance_fixed_point(
      data, cfg.linear.mask_ratio, mc_rng, cfg.linear.with_bias,
      cfg.covariance.estimate_samples, cfg.covariance.residual_samples,
      cfg.covariance.pinv_cutoff);

  const std::string path = csv_path(cfg, "covariance", seed);
  CsvWriter csv(path, kMetricSchema, {"metric", "step", "value"});
  out.csv_paths.push_back(path);
  csv.row({"residual", "0", format_double(fp.residual)});
  csv.row({"pinv_truncated", "0", fp.pinv_truncated ? "1" : "0"});

  // Trajectory: a plain-SGD run should approach the fixed point.
  LinearSettings settings = cfg.linear;
  settings.use_momentum = false;
  LinearPair pair = LinearPair::init(cfg.mixture.dim, settings.with_bias, settings.alpha,
                                     settings.lr, settings.momentum, init_rng,
                                     settings.init_scale);
  const long steps_per_epoch =
      std::max<long>(1, static_cast<long>(data.size() / settings.batch_size));
  double first_epoch = 0.0;
  double prev_epoch = 0.0;
  bool monotone = true;
  for (long epoch = 0; epoch < cfg.covariance.trajectory_epochs; ++epoch) {
    StatAccumulator dist;
    for (long s = 0; s < steps_per_epoch; ++s) {
      linear_train_step(pair, data, settings, batch_rng, mask_rng);
      dist.add(frobenius_norm(sub(pair.student, fp.s_star)));
    }
    const double epoch_dist = dist.mean();
    csv.row({"dist_to_star", std::to_string(epoch), format_double(epoch_dist)});
    if (epoch == 0) {
      first_epoch = epoch_dist;
    } else if (epoch_dist > prev_epoch) {
      monotone = false;
    }
    prev_epoch = epoch_dist;
  }

  out.aggregate.scalars["residual"] = fp.residual;
  out.aggregate.scalars["pinv_truncated"] = fp.pinv_truncated ? 1.0 : 0.0;
  out.aggregate.scalars["first_epoch_dist"] = first_epoch;
  out.aggregate.scalars["final_epoch_dist"] = prev_epoch;
  out.aggregate.scalars["monotone"] = monotone ? 1.0 : 0.0;
  csv.row({"monotone", "0", monotone ? "1" : "0"});
  return out;
}

SeedOutput run_shallow_probe_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  Rng root(seed);
  Rng data_rng = root.substream("data");
  Rng batch_rng = root.substream("batch");
  Rng mask_rng = root.substream("masks");
  Rng init_rng = root.substream("init");
  Rng probe_rng = root.substream("probes");

  const VectorDataset data = build_gaussian_mixture(cfg.mixture, data_rng);
  ShallowNet net = ShallowNet::init(cfg.mixture.dim, cfg.shallow.hidden, cfg.mixture.dim,
                                    cfg.shallow.activation, cfg.linear.alpha,
                                    cfg.linear.lr, cfg.linear.momentum, init_rng,
                                    cfg.shallow.init_scale);

  const std::string path = csv_path(cfg, "shallow_probe", seed);
  CsvWriter csv(path, kProbeSchema, probe_columns());
  out.csv_paths.push_back(path);

  std::map<std::string, CaseAccumulators> acc;
  for (long it = 0; it < cfg.linear.iterations; ++it) {
    DenseMatrix grad_a(net.a.rows, net.a.cols, 0.0);
    DenseMatrix grad_b(net.b.rows, net.b.cols, 0.0);
    for (std::size_t b = 0; b < cfg.linear.batch_size; ++b) {
      const DenseVector& x = data.points[batch_rng.next_below(data.size())];
      const MaskSpec mask = draw_mask(data.dim, cfg.linear.mask_ratio, mask_rng);
      const ShallowGrads g = shallow_grads(net, apply_vector_mask(x, mask), x);
      add_scaled_in_place(grad_a, g.a_total(), 1.0);
      add_scaled_in_place(grad_b, g.b_total(), 1.0);
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.linear.batch_size);
    scale_in_place(grad_a, inv_b);
    scale_in_place(grad_b, inv_b);
    shallow_sgd_step(net, grad_a, grad_b, cfg.linear.use_momentum);
    shallow_ema_update(net);

    if ((it + 1) % cfg.linear.probe_every != 0) continue;
    for (std::size_t p = 0; p < cfg.linear.probe_batch; ++p) {
      const DenseVector& x = data.points[probe_rng.next_below(data.size())];
      const DenseVector& x_other = data.points[probe_rng.next_below(data.size())];
      for (ProbeCase pc : {ProbeCase::kSame, ProbeCase::kSimilar, ProbeCase::kDifferent}) {
        const ProbeRecord rec = run_shallow_probe(net, x, x_other, pc,
                                                  cfg.linear.mask_ratio,
                                                  cfg.linear.use_momentum, probe_rng);
        write_probe_row(csv, net.step, rec);
        acc[probe_case_name(pc)].add(rec);
      }
    }
  }
  for (const auto& [name, a] : acc) out.aggregate.cases[name] = a.finish();
  return out;
}

std::vector<const DenseMatrix*> draw_batch(const ImageCorpus& corpus,
                                           std::size_t batch_size, Rng& rng) {
  std::vector<const DenseMatrix*> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    batch.push_back(&corpus.images[rng.next_below(corpus.size())]);
  return batch;
}

// Shared by rcmae_train and s_vs_d: trains one model, streaming step metrics.
StepMetrics train_rcmae_model(TinyMae& model, const ImageCorpus& corpus,
                              const RcMaeConfig& rc, Rng& root, CsvWriter* csv,
                              StatAccumulator* cos_acc) {
  Rng batch_rng = root.substream("batch");
  MaskStreams streams = MaskStreams::from(root);
  StepMetrics last;
  for (long it = 0; it < rc.iterations; ++it) {
    const auto batch = draw_batch(corpus, rc.batch_size, batch_rng);
    last = train_step(model, batch, rc, streams);
    if (cos_acc && rc.mode != RcMaeMode::kMaeOnly) cos_acc->add(last.cos_recon_vs_cons);
    if (csv) {
      csv->row({std::to_string(model.step), format_double(last.loss_recon),
                format_double(last.loss_cons), format_double(last.grad_norm_recon),
                format_double(last.grad_norm_cons),
                format_double(last.cos_recon_vs_cons)});
    }
  }
  return last;
}

std::vector<std::string> train_columns() {
  return {"step", "loss_recon", "loss_cons", "grad_norm_recon", "grad_norm_cons",
          "cos_recon_vs_cons"};
}

SeedOutput run_rcmae_train_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  Rng root(seed);
  Rng corpus_rng = root.substream("data");
  Rng init_rng = root.substream("init");

  const ImageCorpus corpus = build_image_corpus(cfg.deep.corpus, corpus_rng);
  TinyMae model = TinyMae::init(cfg.deep.shape, init_rng);

  const std::string path = csv_path(cfg, "rcmae_train", seed);
  CsvWriter csv(path, kTrainSchema, train_columns());
  out.csv_paths.push_back(path);

  StatAccumulator cos_acc;
  const StepMetrics last =
      train_rcmae_model(model, corpus, cfg.deep.rcmae, root, &csv, &cos_acc);
  out.aggregate.scalars["final_loss_recon"] = last.loss_recon;
  out.aggregate.scalars["final_loss_cons"] = last.loss_cons;
  out.aggregate.scalars["mean_cos_recon_vs_cons"] = cos_acc.mean();
  return out;
}

SeedOutput run_rcmae_probe_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  Rng root(seed);
  Rng corpus_rng = root.substream("data");
  Rng init_rng = root.substream("init");
  Rng batch_rng = root.substream("batch");
  Rng probe_rng = root.substream("probes");
  MaskStreams streams = MaskStreams::from(root);

  const ImageCorpus corpus = build_image_corpus(cfg.deep.corpus, corpus_rng);
  TinyMae model = TinyMae::init(cfg.deep.shape, init_rng);
  RcMaeConfig rc = cfg.deep.rcmae;

  for (long it = 0; it < cfg.deep.warmup_steps; ++it) {
    const auto batch = draw_batch(corpus, rc.batch_size, batch_rng);
    train_step(model, batch, rc, streams);
  }

  const std::string path = csv_path(cfg, "rcmae_probe", seed);
  CsvWriter csv(path, kProbeSchema, probe_columns());
  out.csv_paths.push_back(path);

  std::map<std::string, CaseAccumulators> acc;
  for (long round = 0; round < cfg.deep.probe_rounds; ++round) {
    for (std::size_t p = 0; p < cfg.deep.probe_batch; ++p) {
      const DenseMatrix& image = corpus.images[probe_rng.next_below(corpus.size())];
      const DenseMatrix& other = corpus.images[probe_rng.next_below(corpus.size())];
      for (ProbeCase pc : {ProbeCase::kSame, ProbeCase::kSimilar, ProbeCase::kDifferent}) {
        const ProbeRecord rec = run_deep_probe(model, image, other, pc, rc, probe_rng);
        write_probe_row(csv, model.step, rec);
        acc[probe_case_name(pc)].add(rec);
      }
    }
    // Keep training between probe rounds so the records span a trajectory.
    const auto batch = draw_batch(corpus, rc.batch_size, batch_rng);
    train_step(model, batch, rc, streams);
  }
  for (const auto& [name, a] : acc) out.aggregate.cases[name] = a.finish();
  return out;
}

SeedOutput run_s_vs_d_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutput out;
  out.aggregate.seed = seed;

  for (RcMaeMode mode : {RcMaeMode::kRcMaeSame, RcMaeMode::kRcMaeDifferent}) {
    Rng root(seed);  // same stream for both modes; only the mode differs
    Rng corpus_rng = root.substream("data");
    Rng init_rng = root.substream("init");

    const ImageCorpus corpus = build_image_corpus(cfg.deep.corpus, corpus_rng);
    TinyMae model = TinyMae::init(cfg.deep.shape, init_rng);
    RcMaeConfig rc = cfg.deep.rcmae;
    rc.mode = mode;

    const std::string stem =
        mode == RcMaeMode::kRcMaeSame ? "s_vs_d_same" : "s_vs_d_different";
    const std::string path = csv_path(cfg, stem, seed);
    CsvWriter csv(path, kTrainSchema, train_columns());
    out.csv_paths.push_back(path);

    StatAccumulator cos_acc;
    train_rcmae_model(model, corpus, rc, root, &csv, &cos_acc);
    const std::string key =
        mode == RcMaeMode::kRcMaeSame ? "mean_cos_same" : "mean_cos_different";
    out.aggregate.scalars[key] = cos_acc.mean();
  }
  return out;
}

SeedOutput run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.experiment) {
    case Experiment::kLinearProbeSuite: return run_linear_probe_seed(cfg, seed);
    case Experiment::kProp1Verify: return run_prop1_seed(cfg, seed);
    case Experiment::kBoundsCheck: return run_bounds_seed(cfg, seed);
    case Experiment::kCovarianceCheck: return run_covariance_seed(cfg, seed);
    case Experiment::kShallowProbeSuite: return run_shallow_probe_seed(cfg, seed);
    case Experiment::kRcMaeTrain: return run_rcmae_train_seed(cfg, seed);
    case Experiment::kRcMaeProbeSuite: return run_rcmae_probe_seed(cfg, seed);
    case Experiment::kSVsDCompare: return run_s_vs_d_seed(cfg, seed);
  }
  throw ContractViolation("run_seed: unknown experiment");
}

// ---- cross-seed verdicts ----------------------------------------------------

int required_seed_count(std::size_t n_seeds) {
  return std::max<int>(1, static_cast<int>(std::ceil(0.8 * static_cast<double>(n_seeds))));
}

const CaseAggregate* find_case(const SeedAggregate& seed, const char* name) {
  auto it = seed.cases.find(name);
  return it == seed.cases.end() ? nullptr : &it->second;
}

void probe_verdicts(RunSummary& summary) {
  int norm_order = 0;
  int cos_order = 0;
  int cos_sign = 0;
  int usable = 0;
  for (const SeedAggregate& seed : summary.per_seed) {
    const CaseAggregate* same = find_case(seed, "same");
    const CaseAggregate* similar = find_case(seed, "similar");
    const CaseAggregate* different = find_case(seed, "different");
    if (!same || !similar || !different) continue;
    usable += 1;
    if (same->norm_cons_mean > similar->norm_cons_mean &&
        similar->norm_cons_mean > different->norm_cons_mean)
      norm_order += 1;
    const bool sign_ok = same->cos_prev_mean < 0.0 &&
                         different->cos_prev_mean >= -0.15 &&
                         different->cos_prev_mean <= 0.15;
    if (sign_ok) cos_sign += 1;
    if (sign_ok && same->cos_prev_mean < similar->cos_prev_mean &&
        similar->cos_prev_mean < different->cos_prev_mean)
      cos_order += 1;
  }
  const int required = required_seed_count(summary.per_seed.size());
  summary.verdicts["n_seeds"] = static_cast<double>(summary.per_seed.size());
  summary.verdicts["required"] = required;
  summary.verdicts["norm_order_count"] = norm_order;
  summary.verdicts["cos_order_count"] = cos_order;
  summary.verdicts["cos_sign_count"] = cos_sign;
  summary.verdicts["norm_order_pass"] = norm_order >= required && usable > 0 ? 1.0 : 0.0;
  summary.verdicts["cos_order_pass"] = cos_order >= required && usable > 0 ? 1.0 : 0.0;
  summary.verdicts["cos_sign_pass"] = cos_sign >= required && usable > 0 ? 1.0 : 0.0;
}

void scalar_verdicts(RunSummary& summary, Experiment exp) {
  const int required = required_seed_count(summary.per_seed.size());
  summary.verdicts["n_seeds"] = static_cast<double>(summary.per_seed.size());
  summary.verdicts["required"] = required;
  switch (exp) {
    case Experiment::kProp1Verify: {
      double overall = 0.0;
      bool all_ok = !summary.per_seed.empty();
      for (const SeedAggregate& seed : summary.per_seed) {
        auto it = seed.scalars.find("max_delta");
        const double d = it == seed.scalars.end() ? 1.0 : it->second;
        overall = std::max(overall, d);
        all_ok = all_ok && !seed.failed && d <= kIdentityTolerance;
      }
      summary.verdicts["max_delta_overall"] = overall;
      summary.verdicts["identity_pass"] = all_ok ? 1.0 : 0.0;
      break;
    }
    case Experiment::kBoundsCheck: {
      double violations = 0.0;
      for (const SeedAggregate& seed : summary.per_seed) {
        auto c = seed.scalars.find("cons_violations");
        auto r = seed.scalars.find("recon_violations");
        if (c != seed.scalars.end()) violations += c->second;
        if (r != seed.scalars.end()) violations += r->second;
      }
      summary.verdicts["total_violations"] = violations;
      summary.verdicts["bounds_pass"] = violations == 0.0 ? 1.0 : 0.0;
      break;
    }
    case Experiment::kCovarianceCheck: {
      int residual_ok = 0;
      int monotone_ok = 0;
      int improved = 0;
      for (const SeedAggregate& seed : summary.per_seed) {
        auto res = seed.scalars.find("residual");
        if (res != seed.scalars.end() && res->second <= kCovarianceResidualCeiling)
          residual_ok += 1;
        auto mono = seed.scalars.find("monotone");
        if (mono != seed.scalars.end() && mono->second == 1.0) monotone_ok += 1;
        auto first = seed.scalars.find("first_epoch_dist");
        auto final_d = seed.scalars.find("final_epoch_dist");
        if (first != seed.scalars.end() && final_d != seed.scalars.end() &&
            final_d->second < first->second)
          improved += 1;
      }
      summary.verdicts["residual_ok_count"] = residual_ok;
      summary.verdicts["monotone_count"] = monotone_ok;
      summary.verdicts["improved_count"] = improved;
      const auto n = static_cast<double>(summary.per_seed.size());
      summary.verdicts["covariance_pass"] =
          (residual_ok == n && monotone_ok == n && improved == n && n > 0) ? 1.0 : 0.0;
      break;
    }
    case Experiment::kSVsDCompare: {
      int margin = 0;
      int centered = 0;
      for (const SeedAggregate& seed : summary.per_seed) {
        auto s = seed.scalars.find("mean_cos_same");
        auto d = seed.scalars.find("mean_cos_different");
        if (s == seed.scalars.end() || d == seed.scalars.end()) continue;
        if (d->second > s->second) margin += 1;
        if (s->second >= -0.1 && s->second <= 0.1) centered += 1;
      }
      summary.verdicts["margin_count"] = margin;
      summary.verdicts["s_centered_count"] = centered;
      summary.verdicts["margin_pass"] = margin >= required ? 1.0 : 0.0;
      summary.verdicts["s_centered_pass"] = centered >= required ? 1.0 : 0.0;
      break;
    }
    default:
      break;
  }
}

void compute_verdicts(RunSummary& summary, Experiment exp) {
  switch (exp) {
    case Experiment::kLinearProbeSuite:
    case Experiment::kShallowProbeSuite:
    case Experiment::kRcMaeProbeSuite:
      probe_verdicts(summary);
      break;
    default:
      scalar_verdicts(summary, exp);
      break;
  }
}

ordered_json case_to_json(const CaseAggregate& c) {
  ordered_json j;
  j["count"] = c.count;
  j["norm_recon_mean"] = c.norm_recon_mean;
  j["norm_recon_std"] = c.norm_recon_std;
  j["norm_cons_mean"] = c.norm_cons_mean;
  j["norm_cons_std"] = c.norm_cons_std;
  j["cos_prev_full_vs_cons_mean"] = c.cos_prev_mean;
  j["cos_prev_full_vs_cons_std"] = c.cos_prev_std;
  j["cos_recon_vs_cons_mean"] = c.cos_rc_mean;
  j["cos_recon_vs_cons_std"] = c.cos_rc_std;
  j["input_similarity_mean"] = c.input_sim_mean;
  j["input_similarity_std"] = c.input_sim_std;
  return j;
}

}  // namespace

std::string summary_to_json(const RunSummary& summary,
                            const std::map<std::string, std::string>& config_echo) {
  ordered_json j;
  j["experiment"] = summary.experiment;
  j["config"] = ordered_json::object();
  for (const auto& [k, v] : config_echo) j["config"][k] = v;
  j["per_seed"] = ordered_json::array();
  for (const SeedAggregate& seed : summary.per_seed) {
    ordered_json js;
    js["seed"] = seed.seed;
    js["failed"] = seed.failed;
    if (seed.failed) js["error"] = seed.error;
    if (!seed.scalars.empty()) {
      js["scalars"] = ordered_json::object();
      for (const auto& [k, v] : seed.scalars) js["scalars"][k] = v;
    }
    if (!seed.cases.empty()) {
      js["cases"] = ordered_json::object();
      for (const auto& [name, c] : seed.cases) js["cases"][name] = case_to_json(c);
    }
    j["per_seed"].push_back(js);
  }
  j["verdicts"] = ordered_json::object();
  for (const auto& [k, v] : summary.verdicts) j["verdicts"][k] = v;
  j["hard_ok"] = summary.hard_ok;
  j["wall_clock_sec"] = summary.wall_clock_sec;
  j["csv_paths"] = summary.csv_paths;
  return j.dump(2) + "\n";
}

RunSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  std::filesystem::create_directories(config.resolved_out_dir());

  const std::size_t n = config.seeds.size();
  std::vector<SeedOutput> outputs(n);
  std::vector<std::thread> workers;
  workers.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    workers.emplace_back([&, i]() {
      const std::uint64_t seed = config.seeds[i];
      try {
        outputs[i] = run_seed(config, seed);
      } catch (const std::exception& e) {
        outputs[i].aggregate.seed = seed;
        outputs[i].aggregate.failed = true;
        outputs[i].aggregate.error = e.what();
        outputs[i].hard_failed = true;
        outputs[i].hard_failures.push_back("seed " + std::to_string(seed) +
                                           " worker failed: " + e.what());
      }
    });
  }
  for (std::thread& w : workers) w.join();

  RunSummary summary;
  summary.experiment = experiment_name(config.experiment);
  for (SeedOutput& out : outputs) {
    summary.per_seed.push_back(std::move(out.aggregate));
    for (std::string& p : out.csv_paths) summary.csv_paths.push_back(std::move(p));
    if (out.hard_failed) summary.hard_ok = false;
  }
  compute_verdicts(summary, config.experiment);

  const auto t1 = std::chrono::steady_clock::now();
  summary.wall_clock_sec = std::chrono::duration<double>(t1 - t0).count();

  if (config.emit_json) {
    summary.summary_path = config.resolved_out_dir() + "/" +
                           experiment_name(config.experiment) + "_summary.json";
    std::ofstream f(summary.summary_path, std::ios::trunc);
    if (!f) throw ContractViolation("run_experiment: cannot write " + summary.summary_path);
    f << summary_to_json(summary, config.flat());
  }
  return summary;
}

// ===========================================================================
// aggregation from CSV files
// ===========================================================================

namespace {

struct CsvTable {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractViolation("aggregate: cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(f, line) || line.rfind("# ", 0) != 0)
    throw ContractViolation("aggregate: missing schema comment in " + path);
  table.schema = line.substr(2);
  if (!std::getline(f, line))
    throw ContractViolation("aggregate: missing header in " + path);
  table.columns = split(line, ',');
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split(line, ',');
    if (cells.size() != table.columns.size())
      throw ContractViolation("aggregate: row width mismatch in " + path);
    table.rows.push_back(std::move(cells));
  }
  return table;
}

std::size_t column_index(const CsvTable& t, const std::string& name,
                         const std::string& path) {
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    if (t.columns[i] == name) return i;
  throw ContractViolation("aggregate: column '" + name + "' missing in " + path);
}

double cell_double(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}

// Seed number from "..._seed<k>.csv"; files without the marker get their
// position index.
std::uint64_t seed_from_path(const std::string& path, std::size_t fallback) {
  const std::size_t at = path.rfind("_seed");
  if (at == std::string::npos) return fallback;
  return static_cast<std::uint64_t>(std::strtoull(path.c_str() + at + 5, nullptr, 10));
}

}  // namespace

RunSummary aggregate_csvs(const std::vector<std::string>& csv_paths) {
  if (csv_paths.empty()) throw ContractViolation("aggregate: empty input list");

  std::vector<CsvTable> tables;
  tables.reserve(csv_paths.size());
  for (const std::string& p : csv_paths) tables.push_back(read_csv(p));
  for (std::size_t i = 1; i < tables.size(); ++i) {
    if (tables[i].schema != tables[0].schema)
      throw ContractViolation("aggregate: schema mismatch between " + csv_paths[0] +
                              " and " + csv_paths[i]);
    for (std::size_t c = 0; c < tables[0].columns.size(); ++c) {
      if (c >= tables[i].columns.size() || tables[i].columns[c] != tables[0].columns[c])
        throw ContractViolation("aggregate: column '" + tables[0].columns[c] +
                                "' mismatch in " + csv_paths[i]);
    }
  }

  RunSummary summary;
  summary.csv_paths = csv_paths;
  const std::string& schema = tables[0].schema;

  if (schema == kProbeSchema) {
    summary.experiment = "probe_aggregate";
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const CsvTable& table = tables[t];
      const std::size_t c_case = column_index(table, "case", csv_paths[t]);
      const std::size_t c_nr = column_index(table, "norm_recon", csv_paths[t]);
      const std::size_t c_nc = column_index(table, "norm_cons", csv_paths[t]);
      const std::size_t c_cp = column_index(table, "cos_prev_full_vs_cons", csv_paths[t]);
      const std::size_t c_crc = column_index(table, "cos_recon_vs_cons", csv_paths[t]);
      const std::size_t c_is = column_index(table, "input_similarity", csv_paths[t]);
      std::map<std::string, CaseAccumulators> acc;
      for (const auto& row : table.rows) {
        ProbeRecord rec;
        rec.norm_recon = cell_double(row[c_nr]);
        rec.norm_cons = cell_double(row[c_nc]);
        rec.cos_prev_full_vs_cons = cell_double(row[c_cp]);
        rec.cos_recon_vs_cons = cell_double(row[c_crc]);
        rec.input_similarity = cell_double(row[c_is]);
        acc[row[c_case]].add(rec);
      }
      SeedAggregate seed;
      seed.seed = seed_from_path(csv_paths[t], t);
      for (const auto& [name, a] : acc) seed.cases[name] = a.finish();
      summary.per_seed.push_back(std::move(seed));
    }
    probe_verdicts(summary);
  } else if (schema == kProp1Schema) {
    summary.experiment = "prop1_verify";
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const std::size_t c_delta = column_index(tables[t], "delta", csv_paths[t]);
      double max_delta = 0.0;
      for (const auto& row : tables[t].rows)
        max_delta = std::max(max_delta, cell_double(row[c_delta]));
      SeedAggregate seed;
      seed.seed = seed_from_path(csv_paths[t], t);
      seed.scalars["max_delta"] = max_delta;
      summary.per_seed.push_back(std::move(seed));
      if (max_delta > kIdentityTolerance) summary.hard_ok = false;
    }
    scalar_verdicts(summary, Experiment::kProp1Verify);
  } else if (schema == kBoundsSchema) {
    summary.experiment = "bounds_check";
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const std::size_t c_cv = column_index(tables[t], "cons_violation", csv_paths[t]);
      const std::size_t c_rv = column_index(tables[t], "recon_violation", csv_paths[t]);
      double cons = 0.0;
      double recon = 0.0;
      for (const auto& row : tables[t].rows) {
        cons += cell_double(row[c_cv]);
        recon += cell_double(row[c_rv]);
      }
      SeedAggregate seed;
      seed.seed = seed_from_path(csv_paths[t], t);
      seed.scalars["cons_violations"] = cons;
      seed.scalars["recon_violations"] = recon;
      summary.per_seed.push_back(std::move(seed));
      if (cons + recon > 0.0) summary.hard_ok = false;
    }
    scalar_verdicts(summary, Experiment::kBoundsCheck);
  } else if (schema == kTrainSchema) {
    summary.experiment = "train_aggregate";
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const std::size_t c_lr = column_index(tables[t], "loss_recon", csv_paths[t]);
      const std::size_t c_lc = column_index(tables[t], "loss_cons", csv_paths[t]);
      const std::size_t c_cos = column_index(tables[t], "cos_recon_vs_cons", csv_paths[t]);
      StatAccumulator cos_acc;
      double last_lr = 0.0;
      double last_lc = 0.0;
      for (const auto& row : tables[t].rows) {
        cos_acc.add(cell_double(row[c_cos]));
        last_lr = cell_double(row[c_lr]);
        last_lc = cell_double(row[c_lc]);
      }
      SeedAggregate seed;
      seed.seed = seed_from_path(csv_paths[t], t);
      seed.scalars["final_loss_recon"] = last_lr;
      seed.scalars["final_loss_cons"] = last_lc;
      seed.scalars["mean_cos_recon_vs_cons"] = cos_acc.mean();
      summary.per_seed.push_back(std::move(seed));
    }
    summary.verdicts["n_seeds"] = static_cast<double>(summary.per_seed.size());
  } else if (schema == kMetricSchema) {
    summary.experiment = "covariance_check";
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const std::size_t c_metric = column_index(tables[t], "metric", csv_paths[t]);
      const std::size_t c_step = column_index(tables[t], "step", csv_paths[t]);
      const std::size_t c_value = column_index(tables[t], "value", csv_paths[t]);
      SeedAggregate seed;
      seed.seed = seed_from_path(csv_paths[t], t);
      double first_dist = 0.0;
      double last_dist = 0.0;
      bool have_first = false;
      for (const auto& row : tables[t].rows) {
        const std::string& metric = row[c_metric];
        const double value = cell_double(row[c_value]);
        if (metric == "dist_to_star") {
          if (!have_first && cell_double(row[c_step]) == 0.0) {
            first_dist = value;
            have_first = true;
          }
          last_dist = value;
        } else {
          seed.scalars[metric] = value;
        }
      }
      seed.scalars["first_epoch_dist"] = first_dist;
      seed.scalars["final_epoch_dist"] = last_dist;
      summary.per_seed.push_back(std::move(seed));
    }
    scalar_verdicts(summary, Experiment::kCovarianceCheck);
  } else {
    throw ContractViolation("aggregate: unknown schema '" + schema + "'");
  }
  return summary;
}

}  // namespace maelab
