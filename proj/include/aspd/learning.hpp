#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "aspd/channel_gen.hpp"
#include "aspd/core_model.hpp"
#include "aspd/selection.hpp"

namespace aspd {

/// Which Gram matrix feeds the network. antenna_gram vectorizes the N x N
/// antenna cross-product H^H H, whose diagonal carries per-antenna energy
/// and whose off-diagonals carry antenna correlations; it is the input the
/// subset predictor trains on by default. user_gram vectorizes the M x M
/// user cross-product Hbar Hbar^H of the zero-padded channel, giving the
/// fixed M^2-length input.
enum class FeatureKind { antenna_gram, user_gram };

struct FeatureVector {
  Eigen::VectorXd values;  // entries in [0, 1] after max-normalization
  FeatureKind kind = FeatureKind::antenna_gram;
};

/// (P_tot / sigma^2) * abs(vec(Gram)) of the zero-padded channel, divided by
/// its maximum entry (skipped for an all-zero channel). Deterministic;
/// invariant to the number of users by construction of the padding.
FeatureVector build_features(const ChannelMatrix& channel,
                             const SystemConfig& cfg, FeatureKind kind);

int feature_dim(FeatureKind kind, int num_antennas, int num_rf_chains);

struct DatasetMeta {
  std::uint64_t seed = 0;
  int num_antennas = 0;
  int num_rf_chains = 0;
  int user_min = 1;
  int user_max = 1;
  double power_budget_w = 0.0;
  double noise_power_w = 0.0;
  int num_samples = 0;
  FeatureKind kind = FeatureKind::antenna_gram;
  int generator_version = 1;
  int resampled = 0;  // scenarios redrawn because every subset failed
};

struct Dataset {
  Eigen::MatrixXd features;      // num_samples x feature_dim
  std::vector<std::uint32_t> labels;  // best-subset indices from exhaustive search
  DatasetMeta meta;
};

/// Labels each sampled scenario with the exhaustive-search best subset.
/// Sample t is a pure function of (seed, t), so generation parallelizes and
/// the output is identical for any thread count.
Dataset generate_dataset(const ScenarioConfig& scfg, const SystemConfig& cfg,
                         int num_samples, const SolverSettings& settings,
                         FeatureKind kind, int num_threads = 1);

/// CSV with header f0,...,f{D-1},label plus a `.meta` sidecar next to it.
void write_dataset(const Dataset& ds, const std::string& csv_path);
Dataset read_dataset(const std::string& csv_path);

/// Fully-connected network: tansig hidden layers (tansig(z) =
/// 2/(1+e^(-2z)) - 1, i.e. tanh), softmax output.
struct MlpModel {
  std::vector<int> layer_dims;           // [input, hidden..., output]
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> biases;

  /// Symmetric uniform init scaled by layer fan-in/fan-out, seeded.
  static MlpModel init(const std::vector<int>& dims, std::uint64_t seed);

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int num_params() const;

  Eigen::VectorXd to_flat() const;
  void from_flat(const Eigen::VectorXd& flat);
};

/// Probability vector over the C(N, M) subsets; sums to 1.
Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& x);

/// Batch forward; columns are samples.
Eigen::MatrixXd mlp_forward_batch(const MlpModel& model,
                                  const Eigen::MatrixXd& x_cols);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;  // flat, same packing as MlpModel::to_flat
};

/// Regularized cross-entropy over the batch (columns of x_cols). two_sided
/// adds the -(1 - B) log(1 - f) term alongside the usual -B log f; log
/// arguments are clamped away from {0, 1} by 1e-12.
LossGrad loss_and_grad(const MlpModel& model, const Eigen::MatrixXd& x_cols,
                       const std::vector<std::uint32_t>& labels,
                       double lambda_reg, bool two_sided = true);

struct TrainConfig {
  double lambda_reg = 1e-3;
  int max_epochs = 400;
  double validation_fraction = 0.1;
  int patience = 20;
  double scg_sigma0 = 1e-4;   // step used for the Hessian-vector estimate
  double scg_lambda0 = 1e-6;  // initial trust-region scale
  bool two_sided_loss = true;
  std::vector<int> hidden_dims = {100, 100};
  std::uint64_t seed = 0;
};

struct TrainLog {
  struct Epoch {
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool accepted = false;
  };
  std::vector<Epoch> epochs;
  int best_epoch = -1;
  bool early_stopped = false;
};

/// Scaled conjugate gradient (full batch): the comparison parameter decides
/// whether a step is accepted, so the training loss never increases over
/// accepted steps. Early stop on validation loss; the best-validation
/// weights are restored. Deterministic given the config seed.
TrainLog scg_train(MlpModel& model, const Dataset& ds, const TrainConfig& tcfg);

/// Subsets of the k_s largest output probabilities, descending; ties go to
/// the lower subset index, so top-k is a prefix of top-(k+1).
std::vector<AntennaSubset> predict_topk(const MlpModel& model,
                                        const FeatureVector& features,
                                        std::uint64_t k_s,
                                        const SubsetEnumeration& enumeration);

/// Learning-assisted selection: predicts k_s candidate subsets, solves the
/// precoding problem on each, returns the best under the same tie rule as
/// the exhaustive search. Charges solve_cost_cu * k_s of processing time.
SelectionResult l_aspd(const MlpModel& model, const ChannelMatrix& channel,
                       const SystemConfig& cfg, std::uint64_t k_s,
                       const SolverSettings& settings);

/// Versioned text format: "laspd-mlp v1", layer dims, then per layer the
/// weight rows followed by one bias row, 17 significant digits.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace aspd
