#include "aspd/learning.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "aspd/rng.hpp"

namespace aspd {

namespace {

constexpr double kProbClamp = 1e-12;

const char* kind_name(FeatureKind kind) {
  return kind == FeatureKind::antenna_gram ? "antenna_gram" : "user_gram";
}

FeatureKind kind_from_name(const std::string& name) {
  if (name == "antenna_gram") return FeatureKind::antenna_gram;
  if (name == "user_gram") return FeatureKind::user_gram;
  throw std::runtime_error("unknown feature kind: " + name);
}

Eigen::MatrixXcd zero_padded(const ChannelMatrix& channel, int num_rf_chains) {
  Eigen::MatrixXcd padded =
      Eigen::MatrixXcd::Zero(num_rf_chains, channel.num_antennas());
  padded.topRows(channel.num_users()) = channel.entries;
  return padded;
}

struct ForwardPass {
  std::vector<Eigen::MatrixXd> hidden;  // tanh activations per hidden layer
  Eigen::MatrixXd probs;                // softmax outputs, columns = samples
};

ForwardPass forward_cached(const MlpModel& model, const Eigen::MatrixXd& x_cols) {
  ForwardPass fp;
  const auto layers = model.weights.size();
  Eigen::MatrixXd a = x_cols;
  fp.hidden.reserve(layers - 1);
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    Eigen::MatrixXd z = (model.weights[l] * a).colwise() + model.biases[l];
    a = z.array().tanh().matrix();
    fp.hidden.push_back(a);
  }
  Eigen::MatrixXd z = (model.weights.back() * a).colwise() + model.biases.back();
  // Stable softmax per column.
  for (int c = 0; c < z.cols(); ++c) {
    Eigen::VectorXd col = z.col(c);
    col.array() -= col.maxCoeff();
    col = col.array().exp();
    z.col(c) = col / col.sum();
  }
  fp.probs = std::move(z);
  return fp;
}

double clamp_prob(double p) {
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

double data_loss(const Eigen::MatrixXd& probs,
                 const std::vector<std::uint32_t>& labels, bool two_sided) {
  const auto batch = static_cast<int>(labels.size());
  double total = 0.0;
  for (int t = 0; t < batch; ++t) {
    const auto y = static_cast<int>(labels[static_cast<std::size_t>(t)]);
    total -= std::log(clamp_prob(probs(y, t)));
    if (two_sided) {
      for (int c = 0; c < probs.rows(); ++c) {
        if (c == y) continue;
        total -= std::log(clamp_prob(1.0 - probs(c, t)));
      }
    }
  }
  return total / batch;
}

double reg_loss(const MlpModel& model, double lambda_reg, int batch) {
  if (lambda_reg == 0.0) return 0.0;
  double sq = 0.0;
  for (const auto& w : model.weights) sq += w.squaredNorm();
  for (const auto& b : model.biases) sq += b.squaredNorm();
  return lambda_reg / (2.0 * batch) * sq;
}

double loss_only(const MlpModel& model, const Eigen::MatrixXd& x_cols,
                 const std::vector<std::uint32_t>& labels, double lambda_reg,
                 bool two_sided) {
  const ForwardPass fp = forward_cached(model, x_cols);
  return data_loss(fp.probs, labels, two_sided) +
         reg_loss(model, lambda_reg, static_cast<int>(labels.size()));
}

std::string meta_path_for(const std::string& csv_path) {
  if (csv_path.size() > 4 && csv_path.ends_with(".csv"))
    return csv_path.substr(0, csv_path.size() - 4) + ".meta";
  return csv_path + ".meta";
}

}  // namespace

int feature_dim(FeatureKind kind, int num_antennas, int num_rf_chains) {
  return kind == FeatureKind::antenna_gram ? num_antennas * num_antennas
                                           : num_rf_chains * num_rf_chains;
}

FeatureVector build_features(const ChannelMatrix& channel,
                             const SystemConfig& cfg, FeatureKind kind) {
  if (channel.num_users() > cfg.num_rf_chains)
    throw std::invalid_argument("need num_users <= num_rf_chains");
  const Eigen::MatrixXcd padded = zero_padded(channel, cfg.num_rf_chains);
  Eigen::MatrixXcd gram;
  if (kind == FeatureKind::user_gram)
    gram = padded * padded.adjoint();  // M x M
  else
    gram = padded.adjoint() * padded;  // N x N

  const double prefactor = cfg.power_budget_w / cfg.noise_power_w;
  FeatureVector fv;
  fv.kind = kind;
  fv.values.resize(gram.size());
  const Eigen::Map<const Eigen::VectorXcd> flat(gram.data(), gram.size());
  fv.values = prefactor * flat.cwiseAbs();
  const double peak = fv.values.maxCoeff();
  if (peak > 0.0) fv.values /= peak;
  return fv;
}

Dataset generate_dataset(const ScenarioConfig& scfg, const SystemConfig& cfg,
                         int num_samples, const SolverSettings& settings,
                         FeatureKind kind, int num_threads) {
  scfg.validate(cfg.num_rf_chains);
  cfg.validate();
  if (num_samples < 1) throw std::invalid_argument("need num_samples >= 1");
  const SubsetEnumeration enumeration(cfg.num_antennas, cfg.num_rf_chains);
  const int dim = feature_dim(kind, cfg.num_antennas, cfg.num_rf_chains);

  Dataset ds;
  ds.features.resize(num_samples, dim);
  ds.labels.resize(static_cast<std::size_t>(num_samples));
  ds.meta = DatasetMeta{scfg.seed,
                        cfg.num_antennas,
                        cfg.num_rf_chains,
                        scfg.user_min,
                        scfg.user_max,
                        cfg.power_budget_w,
                        cfg.noise_power_w,
                        num_samples,
                        kind,
                        1,
                        0};

  std::atomic<int> resampled{0};
  std::atomic<int> cursor{0};
  auto worker = [&] {
    while (true) {
      const int t = cursor.fetch_add(1, std::memory_order_relaxed);
      if (t >= num_samples) break;
      for (std::uint64_t attempt = 0;; ++attempt) {
        const Scenario scen =
            scenario_at(scfg, cfg, static_cast<std::uint64_t>(t), attempt);
        const SelectionResult best = jaspd_exhaustive(scen.channel, cfg, settings, 1);
        if (best.status != SolveStatus::ok) {
          resampled.fetch_add(1, std::memory_order_relaxed);
          continue;
        }
        ds.labels[static_cast<std::size_t>(t)] =
            static_cast<std::uint32_t>(enumeration.rank(best.best_subset));
        ds.features.row(t) =
            build_features(scen.channel, cfg, kind).values.transpose();
        break;
      }
    }
  };
  if (num_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < num_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  ds.meta.resampled = resampled.load();
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& csv_path) {
  std::FILE* f = std::fopen(csv_path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + csv_path);
  const int dim = static_cast<int>(ds.features.cols());
  for (int j = 0; j < dim; ++j) std::fprintf(f, "f%d,", j);
  std::fprintf(f, "label\n");
  for (int t = 0; t < ds.features.rows(); ++t) {
    for (int j = 0; j < dim; ++j) std::fprintf(f, "%.17g,", ds.features(t, j));
    std::fprintf(f, "%" PRIu32 "\n", ds.labels[static_cast<std::size_t>(t)]);
  }
  std::fclose(f);

  std::FILE* meta = std::fopen(meta_path_for(csv_path).c_str(), "w");
  if (!meta) throw std::runtime_error("cannot open " + meta_path_for(csv_path));
  std::fprintf(meta, "format: laspd-dataset v1\n");
  std::fprintf(meta, "seed: %" PRIu64 "\n", ds.meta.seed);
  std::fprintf(meta, "num_antennas: %d\n", ds.meta.num_antennas);
  std::fprintf(meta, "num_rf_chains: %d\n", ds.meta.num_rf_chains);
  std::fprintf(meta, "user_min: %d\n", ds.meta.user_min);
  std::fprintf(meta, "user_max: %d\n", ds.meta.user_max);
  std::fprintf(meta, "power_budget_w: %.17g\n", ds.meta.power_budget_w);
  std::fprintf(meta, "noise_power_w: %.17g\n", ds.meta.noise_power_w);
  std::fprintf(meta, "num_samples: %d\n", ds.meta.num_samples);
  std::fprintf(meta, "feature_kind: %s\n", kind_name(ds.meta.kind));
  std::fprintf(meta, "generator_version: %d\n", ds.meta.generator_version);
  std::fprintf(meta, "resampled: %d\n", ds.meta.resampled);
  std::fclose(meta);
}

Dataset read_dataset(const std::string& csv_path) {
  std::ifstream meta(meta_path_for(csv_path));
  if (!meta)
    throw std::runtime_error("missing dataset metadata " + meta_path_for(csv_path));
  Dataset ds;
  std::string line;
  while (std::getline(meta, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    if (key == "seed") ds.meta.seed = std::stoull(value);
    else if (key == "num_antennas") ds.meta.num_antennas = std::stoi(value);
    else if (key == "num_rf_chains") ds.meta.num_rf_chains = std::stoi(value);
    else if (key == "user_min") ds.meta.user_min = std::stoi(value);
    else if (key == "user_max") ds.meta.user_max = std::stoi(value);
    else if (key == "power_budget_w") ds.meta.power_budget_w = std::stod(value);
    else if (key == "noise_power_w") ds.meta.noise_power_w = std::stod(value);
    else if (key == "num_samples") ds.meta.num_samples = std::stoi(value);
    else if (key == "feature_kind") ds.meta.kind = kind_from_name(value);
    else if (key == "generator_version") ds.meta.generator_version = std::stoi(value);
    else if (key == "resampled") ds.meta.resampled = std::stoi(value);
  }

  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  if (!std::getline(csv, line)) throw std::runtime_error("empty dataset " + csv_path);
  const int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::vector<std::vector<double>> rows;
  std::vector<std::uint32_t> labels;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(dim));
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != dim + 1)
      throw std::runtime_error("malformed dataset row in " + csv_path);
    labels.push_back(static_cast<std::uint32_t>(row.back()));
    row.pop_back();
    rows.push_back(std::move(row));
  }
  ds.features.resize(static_cast<int>(rows.size()), dim);
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (int j = 0; j < dim; ++j)
      ds.features(static_cast<int>(t), j) = rows[t][static_cast<std::size_t>(j)];
  ds.labels = std::move(labels);
  return ds;
}

MlpModel MlpModel::init(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("need at least two layers");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("layer dims must be positive");
  MlpModel model;
  model.layer_dims = dims;
  Rng rng = derive_rng(seed, 0x6d6c70);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return model;
}

int MlpModel::num_params() const {
  int total = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    total += static_cast<int>(weights[l].size() + biases[l].size());
  return total;
}

Eigen::VectorXd MlpModel::to_flat() const {
  Eigen::VectorXd flat(num_params());
  int offset = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto wsize = static_cast<int>(weights[l].size());
    flat.segment(offset, wsize) =
        Eigen::Map<const Eigen::VectorXd>(weights[l].data(), wsize);
    offset += wsize;
    const auto bsize = static_cast<int>(biases[l].size());
    flat.segment(offset, bsize) = biases[l];
    offset += bsize;
  }
  return flat;
}

void MlpModel::from_flat(const Eigen::VectorXd& flat) {
  int offset = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto wsize = static_cast<int>(weights[l].size());
    Eigen::Map<Eigen::VectorXd>(weights[l].data(), wsize) =
        flat.segment(offset, wsize);
    offset += wsize;
    const auto bsize = static_cast<int>(biases[l].size());
    biases[l] = flat.segment(offset, bsize);
    offset += bsize;
  }
}

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.input_dim())
    throw std::invalid_argument("feature length does not match model input");
  return forward_cached(model, x).probs.col(0);
}

Eigen::MatrixXd mlp_forward_batch(const MlpModel& model,
                                  const Eigen::MatrixXd& x_cols) {
  return forward_cached(model, x_cols).probs;
}

LossGrad loss_and_grad(const MlpModel& model, const Eigen::MatrixXd& x_cols,
                       const std::vector<std::uint32_t>& labels,
                       double lambda_reg, bool two_sided) {
  const auto batch = static_cast<int>(labels.size());
  if (batch == 0) throw std::invalid_argument("empty batch");
  const ForwardPass fp = forward_cached(model, x_cols);
  const int out = model.output_dim();

  LossGrad result;
  result.loss = data_loss(fp.probs, labels, two_sided) +
                reg_loss(model, lambda_reg, batch);

  // dL/df, then through the softmax Jacobian: dz_j = f_j (g_j - sum_c g_c f_c).
  Eigen::MatrixXd dprob(out, batch);
  for (int t = 0; t < batch; ++t) {
    const auto y = static_cast<int>(labels[static_cast<std::size_t>(t)]);
    for (int c = 0; c < out; ++c) {
      double g = 0.0;
      if (c == y) g -= 1.0 / clamp_prob(fp.probs(c, t));
      else if (two_sided) g += 1.0 / clamp_prob(1.0 - fp.probs(c, t));
      dprob(c, t) = g / batch;
    }
  }
  Eigen::MatrixXd delta(out, batch);
  for (int t = 0; t < batch; ++t) {
    const double inner = dprob.col(t).dot(fp.probs.col(t));
    delta.col(t) =
        fp.probs.col(t).cwiseProduct(dprob.col(t) - Eigen::VectorXd::Constant(out, inner));
  }

  const auto layers = model.weights.size();
  std::vector<Eigen::MatrixXd> grad_w(layers);
  std::vector<Eigen::VectorXd> grad_b(layers);
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::MatrixXd& below =
        l == 0 ? x_cols : fp.hidden[l - 1];
    grad_w[l].noalias() = delta * below.transpose();
    grad_b[l] = delta.rowwise().sum();
    grad_w[l] += (lambda_reg / batch) * model.weights[l];
    grad_b[l] += (lambda_reg / batch) * model.biases[l];
    if (l > 0) {
      // tanh'(z) = 1 - a^2
      delta = (model.weights[l].transpose() * delta).cwiseProduct(
          (1.0 - fp.hidden[l - 1].array().square()).matrix());
    }
  }

  result.grad.resize(model.num_params());
  int offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto wsize = static_cast<int>(grad_w[l].size());
    result.grad.segment(offset, wsize) =
        Eigen::Map<const Eigen::VectorXd>(grad_w[l].data(), wsize);
    offset += wsize;
    const auto bsize = static_cast<int>(grad_b[l].size());
    result.grad.segment(offset, bsize) = grad_b[l];
    offset += bsize;
  }
  return result;
}

TrainLog scg_train(MlpModel& model, const Dataset& ds, const TrainConfig& tcfg) {
  const int total = static_cast<int>(ds.features.rows());
  if (total < 1) throw std::invalid_argument("empty dataset");
  if (ds.features.cols() != model.input_dim())
    throw std::invalid_argument("dataset features do not match model input");

  // Seeded validation split.
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = derive_rng(tcfg.seed, 0x73706c69, 1);
  for (int i = total - 1; i > 0; --i) {
    const int j = shuffle_rng.uniform_int(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  int val_count = static_cast<int>(std::lround(tcfg.validation_fraction * total));
  val_count = std::min(val_count, total - 1);

  const int train_count = total - val_count;
  Eigen::MatrixXd x_train(ds.features.cols(), train_count);
  Eigen::MatrixXd x_val(ds.features.cols(), std::max(val_count, 1));
  std::vector<std::uint32_t> y_train(static_cast<std::size_t>(train_count));
  std::vector<std::uint32_t> y_val(static_cast<std::size_t>(val_count));
  for (int i = 0; i < train_count; ++i) {
    x_train.col(i) = ds.features.row(order[static_cast<std::size_t>(i)]).transpose();
    y_train[static_cast<std::size_t>(i)] =
        ds.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
  }
  for (int i = 0; i < val_count; ++i) {
    const int src = order[static_cast<std::size_t>(train_count + i)];
    x_val.col(i) = ds.features.row(src).transpose();
    y_val[static_cast<std::size_t>(i)] = ds.labels[static_cast<std::size_t>(src)];
  }

  auto eval = [&](const Eigen::VectorXd& flat) {
    model.from_flat(flat);
    return loss_and_grad(model, x_train, y_train, tcfg.lambda_reg,
                         tcfg.two_sided_loss);
  };
  auto eval_loss = [&](const Eigen::VectorXd& flat) {
    model.from_flat(flat);
    return loss_only(model, x_train, y_train, tcfg.lambda_reg,
                     tcfg.two_sided_loss);
  };
  auto val_loss_at = [&](const Eigen::VectorXd& flat) {
    if (val_count == 0) return 0.0;
    model.from_flat(flat);
    return loss_only(model, x_val, y_val, 0.0, tcfg.two_sided_loss);
  };

  // Moller's scaled conjugate gradient on the flat parameter vector.
  Eigen::VectorXd w = model.to_flat();
  LossGrad cur = eval(w);
  if (!std::isfinite(cur.loss))
    throw DivergenceDetected("initial training loss is not finite");
  Eigen::VectorXd r = -cur.grad;
  Eigen::VectorXd p = r;
  double lambda_scg = tcfg.scg_lambda0;
  double lambda_bar = 0.0;
  bool success = true;
  double delta = 0.0;
  Eigen::VectorXd s_vec(w.size());

  TrainLog log;
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_w = w;
  int since_best = 0;
  const int n_params = static_cast<int>(w.size());

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    const double p_sq = p.squaredNorm();
    if (p_sq < 1e-300 || r.squaredNorm() < 1e-24) break;

    if (success) {
      const double sigma = tcfg.scg_sigma0 / std::sqrt(p_sq);
      const LossGrad probe = eval(w + sigma * p);
      s_vec = (probe.grad - cur.grad) / sigma;
      delta = p.dot(s_vec);
    }
    delta += (lambda_scg - lambda_bar) * p_sq;
    if (delta <= 0.0) {  // make the Hessian estimate positive definite
      lambda_bar = 2.0 * (lambda_scg - delta / p_sq);
      delta = -delta + lambda_scg * p_sq;
      lambda_scg = lambda_bar;
    }
    const double mu = p.dot(r);
    const double alpha = mu / delta;
    const double trial_loss = eval_loss(w + alpha * p);
    const double comparison =
        std::isfinite(trial_loss)
            ? 2.0 * delta * (cur.loss - trial_loss) / (mu * mu)
            : -1.0;

    bool accepted = false;
    if (comparison >= 0.0) {
      w += alpha * p;
      cur = eval(w);
      if (!std::isfinite(cur.loss))
        throw DivergenceDetected("training loss became non-finite");
      const Eigen::VectorXd r_new = -cur.grad;
      lambda_bar = 0.0;
      success = true;
      accepted = true;
      if ((epoch + 1) % n_params == 0) {
        p = r_new;
      } else {
        const double beta = (r_new.squaredNorm() - r_new.dot(r)) / mu;
        p = r_new + beta * p;
      }
      r = r_new;
      if (comparison >= 0.75) lambda_scg *= 0.25;
    } else {
      lambda_bar = lambda_scg;
      success = false;
    }
    if (comparison < 0.25) lambda_scg += delta * (1.0 - comparison) / p_sq;
    lambda_scg = std::min(lambda_scg, 1e100);

    const double vloss = val_loss_at(w);
    log.epochs.push_back({cur.loss, vloss, accepted});
    if (val_count > 0) {
      if (vloss < best_val - 1e-12 * std::max(1.0, std::abs(vloss))) {
        best_val = vloss;
        best_w = w;
        log.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best > tcfg.patience) {
        log.early_stopped = true;
        break;
      }
    }
  }

  model.from_flat(val_count > 0 ? best_w : w);
  return log;
}

std::vector<AntennaSubset> predict_topk(const MlpModel& model,
                                        const FeatureVector& features,
                                        std::uint64_t k_s,
                                        const SubsetEnumeration& enumeration) {
  if (model.output_dim() != static_cast<int>(enumeration.count))
    throw std::invalid_argument("model output does not match subset count");
  if (k_s < 1 || k_s > enumeration.count)
    throw std::invalid_argument("k_s must lie in [1, C(N, M)]");
  const Eigen::VectorXd probs = mlp_forward(model, features.values);

  std::vector<std::uint32_t> idx(static_cast<std::size_t>(enumeration.count));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_s),
                    idx.end(), [&](std::uint32_t a, std::uint32_t b) {
                      if (probs[a] != probs[b]) return probs[a] > probs[b];
                      return a < b;
                    });
  std::vector<AntennaSubset> out;
  out.reserve(static_cast<std::size_t>(k_s));
  for (std::uint64_t i = 0; i < k_s; ++i)
    out.push_back(enumeration.unrank(idx[static_cast<std::size_t>(i)]));
  return out;
}

SelectionResult l_aspd(const MlpModel& model, const ChannelMatrix& channel,
                       const SystemConfig& cfg, std::uint64_t k_s,
                       const SolverSettings& settings) {
  const int k_users = channel.num_users();
  if (k_users > cfg.num_rf_chains)
    throw std::invalid_argument("need num_users <= num_rf_chains");
  const SubsetEnumeration enumeration(cfg.num_antennas, cfg.num_rf_chains);
  if (model.output_dim() != static_cast<int>(enumeration.count))
    throw std::invalid_argument("model output does not match C(N, M)");

  FeatureKind kind;
  if (model.input_dim() == feature_dim(FeatureKind::antenna_gram,
                                       cfg.num_antennas, cfg.num_rf_chains))
    kind = FeatureKind::antenna_gram;
  else if (model.input_dim() == feature_dim(FeatureKind::user_gram,
                                            cfg.num_antennas, cfg.num_rf_chains))
    kind = FeatureKind::user_gram;
  else
    throw std::invalid_argument("model input matches neither feature kind");

  const FeatureVector fv = build_features(channel, cfg, kind);
  const std::vector<AntennaSubset> candidates =
      predict_topk(model, fv, k_s, enumeration);
  const double eff_bw = effective_bandwidth(cfg, 0.0, k_users);

  SelectionResult result;
  result.subsets_examined = k_s;
  result.log.reserve(candidates.size());
  for (const auto& subset : candidates)
    result.log.push_back(solve_subset(channel, cfg, settings, enumeration,
                                      eff_bw, enumeration.rank(subset)));
  const double tau_pro = cfg.solve_cost_cu * static_cast<double>(k_s);
  finalize_selection(result, channel, cfg, settings, enumeration, eff_bw, tau_pro);
  return result;
}

void save_model(const MlpModel& model, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fprintf(f, "laspd-mlp v1\n");
  for (std::size_t i = 0; i < model.layer_dims.size(); ++i)
    std::fprintf(f, "%d%c", model.layer_dims[i],
                 i + 1 == model.layer_dims.size() ? '\n' : ' ');
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const auto& w = model.weights[l];
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j)
        std::fprintf(f, "%.17g%c", w(i, j), j + 1 == w.cols() ? '\n' : ' ');
    }
    const auto& b = model.biases[l];
    for (int i = 0; i < b.size(); ++i)
      std::fprintf(f, "%.17g%c", b[i], i + 1 == b.size() ? '\n' : ' ');
  }
  std::fclose(f);
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingModel("cannot open model file " + path);
  std::string header;
  std::getline(in, header);
  if (header != "laspd-mlp v1")
    throw std::runtime_error(path + ": unsupported model format '" + header + "'");
  std::string dims_line;
  std::getline(in, dims_line);
  std::vector<int> dims;
  {
    std::stringstream ss(dims_line);
    int d;
    while (ss >> d) dims.push_back(d);
  }
  if (dims.size() < 2) throw std::runtime_error(path + ": bad layer dims");

  MlpModel model;
  model.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Eigen::MatrixXd w(dims[l + 1], dims[l]);
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j)
        if (!(in >> w(i, j)))
          throw std::runtime_error(path + ": truncated weights");
    Eigen::VectorXd b(dims[l + 1]);
    for (int i = 0; i < b.size(); ++i)
      if (!(in >> b[i])) throw std::runtime_error(path + ": truncated biases");
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  return model;
}

}  // namespace aspd
