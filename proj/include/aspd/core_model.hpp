#pragma once

#include <Eigen/Dense>
#include <vector>

#include "aspd/errors.hpp"

namespace aspd {

/// All scalar system constants. Rates are bit/s, powers are watts; dB
/// conversions happen only at the channel-generation boundary.
struct SystemConfig {
  double bandwidth_hz = 1e6;      // B
  double block_len_cu = 200.0;    // T, channel uses
  double cu_duration_s = 66.7e-6; // one channel use, seconds
  double noise_power_w = 1e-11;   // sigma^2 (-140 dBm/Hz over 1 MHz)
  double power_budget_w = 2.0;    // P_tot
  double qos_bps = 2e6;           // eta, uniform across users
  int num_antennas = 8;           // N
  int num_rf_chains = 4;          // M
  double solve_cost_cu = 0.2;     // processing time per candidate subset

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// Complex K x N channel gains, pathloss included. Rows are users.
struct ChannelMatrix {
  Eigen::MatrixXcd entries;

  int num_users() const { return static_cast<int>(entries.rows()); }
  int num_antennas() const { return static_cast<int>(entries.cols()); }
  void validate() const;  // finiteness, K >= 1
};

/// Sorted set of M distinct antenna indices in [0, N).
struct AntennaSubset {
  std::vector<int> indices;

  static AntennaSubset of(std::vector<int> idx, int num_antennas);
  static AntennaSubset first_m(int m);  // {0, ..., m-1}
  int size() const { return static_cast<int>(indices.size()); }
  bool operator==(const AntennaSubset&) const = default;
};

/// M x K complex precoders, column k serves user k.
struct PrecodingMatrix {
  Eigen::MatrixXcd columns;

  double total_power_w() const { return columns.squaredNorm(); }
  int num_users() const { return static_cast<int>(columns.cols()); }
};

struct RateReport {
  Eigen::VectorXd per_user_rate_bps;
  double sum_rate_bps = 0.0;
  std::vector<bool> qos_satisfied;
  double tau_pro_cu = 0.0;
  double tau_csi_cu = 0.0;
  double effective_bandwidth_hz = 0.0;
  double total_power_w = 0.0;
};

/// Channel estimation time in channel uses: K * (floor(N/M) + 1).
int channel_overhead(int num_users, int num_antennas, int num_rf_chains);

/// B * (1 - (tau_csi + tau_pro) / T). Throws OverheadExceedsBlock when the
/// combined overhead reaches the block length.
double effective_bandwidth(const SystemConfig& cfg, double tau_pro_cu,
                           int num_users);

/// Gathers the columns of H named by the subset, preserving order.
Eigen::MatrixXcd restrict_channel(const Eigen::MatrixXcd& channel,
                                  const AntennaSubset& subset);

/// |h_k w_k|^2 / (sum_{i != k} |h_k w_i|^2 + sigma^2).
double sinr(const Eigen::MatrixXcd& channel_sub, const PrecodingMatrix& w,
            int user, double noise_power_w);

/// Per-user and sum rates at the given processing overhead, with QoS flags
/// (absolute tolerance 1e-9 * eta).
RateReport sum_rate(const Eigen::MatrixXcd& channel_sub,
                    const PrecodingMatrix& w, const SystemConfig& cfg,
                    double tau_pro_cu);

}  // namespace aspd
