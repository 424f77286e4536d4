#include "aspd/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aspd {

void SystemConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(bandwidth_hz > 0, "bandwidth_hz must be positive");
  require(block_len_cu > 0, "block_len_cu must be positive");
  require(cu_duration_s > 0, "cu_duration_s must be positive");
  require(noise_power_w > 0, "noise_power_w must be positive");
  require(power_budget_w > 0, "power_budget_w must be positive");
  require(qos_bps > 0, "qos_bps must be positive");
  require(num_rf_chains >= 1, "num_rf_chains must be >= 1");
  require(num_antennas >= num_rf_chains, "need num_antennas >= num_rf_chains");
  require(solve_cost_cu >= 0, "solve_cost_cu must be nonnegative");
  // The block must outlast channel estimation even at the largest user count.
  require(channel_overhead(num_rf_chains, num_antennas, num_rf_chains) <
              block_len_cu,
          "block_len_cu must exceed the channel estimation time");
}

void ChannelMatrix::validate() const {
  if (entries.rows() < 1) throw std::invalid_argument("channel needs >= 1 user");
  if (!entries.allFinite())
    throw std::invalid_argument("channel entries must be finite");
}

AntennaSubset AntennaSubset::of(std::vector<int> idx, int num_antennas) {
  if (idx.empty()) throw std::invalid_argument("empty antenna subset");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= num_antennas)
      throw std::invalid_argument("antenna index out of range");
    if (i > 0 && idx[i] <= idx[i - 1])
      throw std::invalid_argument("antenna indices must be strictly increasing");
  }
  return AntennaSubset{std::move(idx)};
}

AntennaSubset AntennaSubset::first_m(int m) {
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  return AntennaSubset{std::move(idx)};
}

int channel_overhead(int num_users, int num_antennas, int num_rf_chains) {
  return num_users * (num_antennas / num_rf_chains + 1);
}

double effective_bandwidth(const SystemConfig& cfg, double tau_pro_cu,
                           int num_users) {
  const double tau_csi =
      channel_overhead(num_users, cfg.num_antennas, cfg.num_rf_chains);
  const double total = tau_csi + tau_pro_cu;
  if (total >= cfg.block_len_cu)
    throw OverheadExceedsBlock("overhead " + std::to_string(total) +
                               " c.u. >= block length " +
                               std::to_string(cfg.block_len_cu) + " c.u.");
  return cfg.bandwidth_hz * (1.0 - total / cfg.block_len_cu);
}

Eigen::MatrixXcd restrict_channel(const Eigen::MatrixXcd& channel,
                                  const AntennaSubset& subset) {
  Eigen::MatrixXcd out(channel.rows(), subset.size());
  for (int j = 0; j < subset.size(); ++j)
    out.col(j) = channel.col(subset.indices[static_cast<std::size_t>(j)]);
  return out;
}

double sinr(const Eigen::MatrixXcd& channel_sub, const PrecodingMatrix& w,
            int user, double noise_power_w) {
  const auto row = channel_sub.row(user);
  double interference = 0.0;
  for (int i = 0; i < w.num_users(); ++i) {
    if (i == user) continue;
    interference += std::norm(std::complex<double>(row * w.columns.col(i)));
  }
  const double signal = std::norm(std::complex<double>(row * w.columns.col(user)));
  return signal / (interference + noise_power_w);
}

RateReport sum_rate(const Eigen::MatrixXcd& channel_sub,
                    const PrecodingMatrix& w, const SystemConfig& cfg,
                    double tau_pro_cu) {
  const int k_users = static_cast<int>(channel_sub.rows());
  RateReport report;
  report.tau_pro_cu = tau_pro_cu;
  report.tau_csi_cu =
      channel_overhead(k_users, cfg.num_antennas, cfg.num_rf_chains);
  report.effective_bandwidth_hz = effective_bandwidth(cfg, tau_pro_cu, k_users);
  report.per_user_rate_bps.resize(k_users);
  report.qos_satisfied.resize(static_cast<std::size_t>(k_users));
  for (int k = 0; k < k_users; ++k) {
    const double ratio = sinr(channel_sub, w, k, cfg.noise_power_w);
    const double rate = report.effective_bandwidth_hz * std::log2(1.0 + ratio);
    report.per_user_rate_bps[k] = rate;
    report.qos_satisfied[static_cast<std::size_t>(k)] =
        rate >= cfg.qos_bps - 1e-9 * cfg.qos_bps;
  }
  report.sum_rate_bps = report.per_user_rate_bps.sum();
  report.total_power_w = w.total_power_w();
  return report;
}

}  // namespace aspd
