#include <doctest.h>

#include <cmath>
#include <complex>

#include "aspd/core_model.hpp"
#include "aspd/rng.hpp"
#include "aspd/sca_beamformer.hpp"

using namespace aspd;

namespace {

SystemConfig config_with(int n, int m, double p_tot = 2.0) {
  SystemConfig cfg;
  cfg.num_antennas = n;
  cfg.num_rf_chains = m;
  cfg.power_budget_w = p_tot;
  return cfg;
}

Eigen::MatrixXcd random_channel(int k, int n, Rng& rng, double amp = 1e-4) {
  Eigen::MatrixXcd h(k, n);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < n; ++c) h(r, c) = amp * rng.complex_gaussian();
  return h;
}

PrecodingMatrix random_precoders(int m, int k, Rng& rng) {
  PrecodingMatrix w;
  w.columns.resize(m, k);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < k; ++c) w.columns(r, c) = rng.complex_gaussian();
  return w;
}

/// Straight evaluation of the SINR ratio from raw inner products, kept
/// independent of the library path.
double sinr_by_hand(const Eigen::MatrixXcd& h, const Eigen::MatrixXcd& w,
                    int user, double noise) {
  std::complex<double> signal_amp = 0.0;
  for (int a = 0; a < h.cols(); ++a) signal_amp += h(user, a) * w(a, user);
  double interference = 0.0;
  for (int i = 0; i < w.cols(); ++i) {
    if (i == user) continue;
    std::complex<double> amp = 0.0;
    for (int a = 0; a < h.cols(); ++a) amp += h(user, a) * w(a, i);
    interference += std::norm(amp);
  }
  return std::norm(signal_amp) / (interference + noise);
}

}  // namespace

TEST_CASE("channel overhead matches the estimation-time formula") {
  CHECK(channel_overhead(4, 9, 4) == 12);
  CHECK(channel_overhead(4, 10, 4) == 12);
  CHECK(channel_overhead(4, 6, 4) == 8);
  CHECK(channel_overhead(2, 8, 4) == 6);
}

TEST_CASE("channel overhead is monotone in users and antennas, antitone in chains") {
  for (int k = 1; k <= 4; ++k)
    for (int n = 4; n <= 12; ++n)
      for (int m = 1; m <= 4; ++m) {
        CHECK(channel_overhead(k + 1, n, m) >= channel_overhead(k, n, m));
        CHECK(channel_overhead(k, n + 1, m) >= channel_overhead(k, n, m));
        CHECK(channel_overhead(k, n, m + 1) <= channel_overhead(k, n, m));
      }
}

TEST_CASE("effective bandwidth applies the overhead fraction") {
  SystemConfig cfg = config_with(9, 4);  // tau_csi = 12 for K=4
  CHECK(effective_bandwidth(cfg, 2.0, 4) == doctest::Approx(0.93e6).epsilon(1e-12));

  cfg = config_with(6, 4);  // tau_csi = 8 for K=4
  CHECK(effective_bandwidth(cfg, 0.0, 4) == doctest::Approx(0.96e6).epsilon(1e-12));

  cfg = config_with(376, 4);  // tau_csi = 190 for K=2
  CHECK(channel_overhead(2, 376, 4) == 190);
  CHECK_THROWS_AS((void)effective_bandwidth(cfg, 20.0, 2), OverheadExceedsBlock);
}

TEST_CASE("restrict_channel gathers the selected columns") {
  Eigen::MatrixXcd h(1, 4);
  h << std::complex<double>(1, 0), std::complex<double>(0, 2),
      std::complex<double>(3, 0), std::complex<double>(4, 0);
  const auto picked = restrict_channel(h, AntennaSubset::of({0, 2}, 4));
  CHECK(picked(0, 0) == std::complex<double>(1, 0));
  CHECK(picked(0, 1) == std::complex<double>(3, 0));

  Rng rng(1);
  const Eigen::MatrixXcd full = random_channel(3, 3, rng);
  CHECK(restrict_channel(full, AntennaSubset::first_m(3)) == full);

  const Eigen::MatrixXcd wide = random_channel(2, 5, rng);
  const auto sub = restrict_channel(wide, AntennaSubset::of({1, 3, 4}, 5));
  CHECK(sub.col(0) == wide.col(1));
  CHECK(sub.col(1) == wide.col(3));
  CHECK(sub.col(2) == wide.col(4));
}

TEST_CASE("antenna subset invariants are enforced") {
  CHECK_THROWS_AS(AntennaSubset::of({2, 1}, 4), std::invalid_argument);
  CHECK_THROWS_AS(AntennaSubset::of({0, 0}, 4), std::invalid_argument);
  CHECK_THROWS_AS(AntennaSubset::of({0, 4}, 4), std::invalid_argument);
  CHECK_THROWS_AS(AntennaSubset::of({}, 4), std::invalid_argument);
}

TEST_CASE("sinr handles the no-interference cases in closed form") {
  Eigen::MatrixXcd h(1, 2);
  h << 1.0, 0.0;
  PrecodingMatrix w;
  w.columns.resize(2, 1);
  w.columns << std::sqrt(2.0), 0.0;
  CHECK(sinr(h, w, 0, 1e-11) == doctest::Approx(2.0 / 1e-11).epsilon(1e-12));

  // Orthogonal zero-forcing pair: the interference term vanishes.
  Eigen::MatrixXcd h2(2, 2);
  h2 << 1.0, 0.0, 0.0, 1.0;
  PrecodingMatrix w2;
  w2.columns.resize(2, 2);
  w2.columns << 0.7, 0.0, 0.0, 0.4;
  CHECK(sinr(h2, w2, 0, 1e-3) == doctest::Approx(0.49 / 1e-3).epsilon(1e-12));
  CHECK(sinr(h2, w2, 1, 1e-3) == doctest::Approx(0.16 / 1e-3).epsilon(1e-12));
}

TEST_CASE("sinr matches an independent evaluation on random instances") {
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::MatrixXcd h = random_channel(2, 3, rng);
    const PrecodingMatrix w = random_precoders(3, 2, rng);
    for (int k = 0; k < 2; ++k)
      CHECK(sinr(h, w, k, 1e-9) ==
            doctest::Approx(sinr_by_hand(h, w.columns, k, 1e-9)).epsilon(1e-12));
  }
}

TEST_CASE("sum_rate reproduces the single-user MRT closed form") {
  SystemConfig cfg = config_with(9, 4);
  cfg.noise_power_w = 1e-11;
  cfg.power_budget_w = 2.0;

  Rng rng(7);
  Eigen::MatrixXcd h = random_channel(1, 4, rng);
  h *= std::sqrt(1e-7) / h.norm();  // ||h||^2 = 1e-7
  PrecodingMatrix w;
  w.columns = std::sqrt(2.0) * h.adjoint() / h.norm();

  // tau_csi = 3 for K=1 here; tau_pro = 11 lands on the 0.93 bandwidth factor.
  const RateReport report = sum_rate(h, w, cfg, 11.0);
  CHECK(report.effective_bandwidth_hz == doctest::Approx(0.93e6).epsilon(1e-12));
  const double expected = 0.93e6 * std::log2(1.0 + 2e4);
  CHECK(report.sum_rate_bps == doctest::Approx(expected).epsilon(1e-3));
  CHECK(report.sum_rate_bps == doctest::Approx(13.2877e6).epsilon(1e-3));
}

TEST_CASE("sum_rate flags and zero-precoder behavior") {
  SystemConfig cfg = config_with(6, 4);
  Rng rng(3);
  const Eigen::MatrixXcd h = random_channel(2, 4, rng);

  PrecodingMatrix zero;
  zero.columns = Eigen::MatrixXcd::Zero(4, 2);
  const RateReport silent = sum_rate(h, zero, cfg, 0.0);
  CHECK(silent.sum_rate_bps == 0.0);
  CHECK_FALSE(silent.qos_satisfied[0]);
  CHECK_FALSE(silent.qos_satisfied[1]);

  // Zero-forcing construction meets QoS exactly.
  const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
  const ZfResult zf = zf_initialize(h, cfg, eff_bw);
  REQUIRE(zf.status == SolveStatus::ok);
  const RateReport report = sum_rate(h, zf.iterate.precoders, cfg, 0.0);
  for (int k = 0; k < 2; ++k) {
    CHECK(report.per_user_rate_bps[k] ==
          doctest::Approx(cfg.qos_bps).epsilon(1e-6));
    CHECK(report.qos_satisfied[static_cast<std::size_t>(k)]);
  }
  CHECK(report.total_power_w == doctest::Approx(zf.required_power_w));
}

TEST_CASE("sum_rate is invariant under per-column phase rotation") {
  SystemConfig cfg = config_with(8, 4);
  Rng rng(11);
  const Eigen::MatrixXcd h = random_channel(3, 4, rng);
  const PrecodingMatrix w = random_precoders(4, 3, rng);
  const RateReport base = sum_rate(h, w, cfg, 0.0);
  for (int k = 0; k < 3; ++k) {
    PrecodingMatrix rotated = w;
    rotated.columns.col(k) *= std::polar(1.0, rng.uniform(0.0, 6.28));
    const RateReport after = sum_rate(h, rotated, cfg, 0.0);
    for (int i = 0; i < 3; ++i)
      CHECK(after.per_user_rate_bps[i] ==
            doctest::Approx(base.per_user_rate_bps[i]).epsilon(1e-12));
  }
}

TEST_CASE("sinr is invariant when channels and noise scale together") {
  Rng rng(13);
  const Eigen::MatrixXcd h = random_channel(2, 4, rng);
  const PrecodingMatrix w = random_precoders(4, 2, rng);
  const std::complex<double> c(0.3, -1.7);
  const Eigen::MatrixXcd scaled = c * h;
  for (int k = 0; k < 2; ++k)
    CHECK(sinr(scaled, w, k, std::norm(c) * 1e-9) ==
          doctest::Approx(sinr(h, w, k, 1e-9)).epsilon(1e-12));
}

TEST_CASE("rate decreases strictly as processing overhead grows") {
  SystemConfig cfg = config_with(8, 4);
  Rng rng(17);
  const Eigen::MatrixXcd h = random_channel(2, 4, rng);
  const PrecodingMatrix w = random_precoders(4, 2, rng);
  double previous = sum_rate(h, w, cfg, 0.0).sum_rate_bps;
  for (double tau : {5.0, 20.0, 80.0}) {
    const double current = sum_rate(h, w, cfg, tau).sum_rate_bps;
    CHECK(current < previous);
    previous = current;
  }
}
