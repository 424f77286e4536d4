#include <doctest.h>

#include <cmath>
#include <complex>

#include "aspd/channel_gen.hpp"
#include "aspd/core_model.hpp"
#include "aspd/rng.hpp"
#include "aspd/sca_beamformer.hpp"
#include "oracles.hpp"

using namespace aspd;

namespace {

SystemConfig config_for(int n, int m, double p_tot = 2.0) {
  SystemConfig cfg;
  cfg.num_antennas = n;
  cfg.num_rf_chains = m;
  cfg.power_budget_w = p_tot;
  return cfg;
}

Eigen::MatrixXcd random_channel(int k, int n, Rng& rng, double amp = 3e-4) {
  Eigen::MatrixXcd h(k, n);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < n; ++c) h(r, c) = amp * rng.complex_gaussian();
  return h;
}

double qos_floor(const SystemConfig& cfg, double eff_bw) {
  return std::exp2(cfg.qos_bps / eff_bw) - 1.0;
}

}  // namespace

TEST_CASE("real embedding reproduces the quadratic form") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::RowVectorXcd h(3);
    Eigen::VectorXcd w(3);
    for (int i = 0; i < 3; ++i) {
      h[i] = rng.complex_gaussian();
      w[i] = rng.complex_gaussian();
    }
    const Eigen::MatrixXd a = embed_quadratic_form(h);
    const Eigen::VectorXd v = embed_complex(w);
    const double direct = std::norm(std::complex<double>(h * w));
    CHECK(v.dot(a * v) == doctest::Approx(direct).epsilon(1e-12));
    CHECK((a - a.transpose()).norm() == 0.0);  // exactly symmetric
  }
}

TEST_CASE("zero-forcing init: single-user closed form and feasibility edge") {
  SystemConfig cfg = config_for(4, 4);
  Rng rng(5);
  const Eigen::MatrixXcd h = random_channel(1, 4, rng);
  const double eff_bw = effective_bandwidth(cfg, 0.0, 1);
  const double eta_bar = qos_floor(cfg, eff_bw);

  const ZfResult zf = zf_initialize(h, cfg, eff_bw);
  REQUIRE(zf.status == SolveStatus::ok);
  const Eigen::VectorXcd expected =
      std::sqrt(cfg.noise_power_w * eta_bar) * h.adjoint() / h.squaredNorm();
  CHECK((zf.iterate.precoders.columns.col(0) - expected).norm() <
        1e-12 * expected.norm());
  CHECK(zf.required_power_w ==
        doctest::Approx(cfg.noise_power_w * eta_bar / h.squaredNorm()));

  // Shrink the budget below the required power: infeasible.
  SystemConfig tight = cfg;
  tight.power_budget_w = zf.required_power_w * 0.5;
  CHECK(zf_initialize(h, tight, eff_bw).status == SolveStatus::infeasible);
}

TEST_CASE("zero-forcing init: orthogonal rows decouple the users") {
  SystemConfig cfg = config_for(4, 2);
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
  h(0, 0) = std::complex<double>(3e-4, 1e-4);
  h(1, 1) = std::complex<double>(-2e-4, 2e-4);
  const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
  const double eta_bar = qos_floor(cfg, eff_bw);

  const ZfResult zf = zf_initialize(h, cfg, eff_bw);
  REQUIRE(zf.status == SolveStatus::ok);
  for (int k = 0; k < 2; ++k) {
    const double power = zf.iterate.precoders.columns.col(k).squaredNorm();
    CHECK(power == doctest::Approx(cfg.noise_power_w * eta_bar /
                                   h.row(k).squaredNorm())
                       .epsilon(1e-12));
  }
  const RateReport report = sum_rate(h, zf.iterate.precoders, cfg, 0.0);
  CHECK(report.per_user_rate_bps[0] == doctest::Approx(cfg.qos_bps).epsilon(1e-9));
  CHECK(report.per_user_rate_bps[1] == doctest::Approx(cfg.qos_bps).epsilon(1e-9));
}

TEST_CASE("zero-forcing init: random instances meet QoS with nulled interference") {
  SystemConfig cfg = config_for(4, 4);
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXcd h = random_channel(2, 4, rng);
    const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
    const ZfResult zf = zf_initialize(h, cfg, eff_bw);
    REQUIRE(zf.status == SolveStatus::ok);
    for (int k = 0; k < 2; ++k) {
      // Straight evaluation of the rate expression on the constructed W.
      const std::complex<double> own(h.row(k) *
                                     zf.iterate.precoders.columns.col(k));
      const std::complex<double> cross(
          h.row(k) * zf.iterate.precoders.columns.col(1 - k));
      CHECK(std::norm(cross) < 1e-12 * std::norm(own));
      const double rate =
          eff_bw * std::log2(1.0 + std::norm(own) /
                                       (std::norm(cross) + cfg.noise_power_w));
      CHECK(rate == doctest::Approx(cfg.qos_bps).epsilon(1e-6));
    }
  }
}

TEST_CASE("zero-forcing init flags rank-deficient channels") {
  SystemConfig cfg = config_for(4, 4);
  Rng rng(7);
  Eigen::MatrixXcd h = random_channel(2, 4, rng);
  h.row(1) = h.row(0) * std::complex<double>(2.0, 1.0);  // collinear users
  const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
  CHECK(zf_initialize(h, cfg, eff_bw).status == SolveStatus::rank_deficient);
}

TEST_CASE("dc linearization is exact at its expansion point") {
  // Scalar real case: surrogate at (w, u) = (1, 1) with h = 1 equals 1.
  Eigen::MatrixXcd h(1, 1);
  h(0, 0) = 1.0;
  PrecodingMatrix w_hat;
  w_hat.columns = Eigen::MatrixXcd::Ones(1, 1);
  Eigen::VectorXd u_hat = Eigen::VectorXd::Ones(1);
  const DcLinearization lin = dc_linearize(h, w_hat, u_hat, 0);
  Eigen::VectorXd v(2);
  v << 1.0, 0.0;
  CHECK(lin.value_at(v, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(lin.offset) < 1e-14);

  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXcd ch = random_channel(2, 3, rng, 1.0);
    PrecodingMatrix wh;
    wh.columns.resize(3, 2);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 2; ++c) wh.columns(r, c) = rng.complex_gaussian();
    Eigen::VectorXd uh(2);
    uh << rng.uniform(0.2, 8.0), rng.uniform(0.2, 8.0);
    for (int k = 0; k < 2; ++k) {
      const DcLinearization l = dc_linearize(ch, wh, uh, k);
      const double truth =
          std::norm(std::complex<double>(ch.row(k) * wh.columns.col(k))) /
          uh[k];
      const double at_expansion =
          l.value_at(embed_complex(wh.columns.col(k)), uh[k]);
      CHECK(at_expansion == doctest::Approx(truth).epsilon(1e-10));
    }
  }
}

TEST_CASE("dc linearization never overestimates the convex ratio") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::MatrixXcd ch = random_channel(1, 3, rng, 1.0);
    PrecodingMatrix wh;
    wh.columns.resize(3, 1);
    for (int r = 0; r < 3; ++r) wh.columns(r, 0) = rng.complex_gaussian();
    Eigen::VectorXd uh(1);
    uh << rng.uniform(0.1, 5.0);
    const DcLinearization l = dc_linearize(ch, wh, uh, 0);
    for (int probe = 0; probe < 30; ++probe) {
      Eigen::VectorXcd w(3);
      for (int r = 0; r < 3; ++r) w[r] = rng.complex_gaussian();
      const double u = rng.uniform(0.05, 20.0);
      const double truth = std::norm(std::complex<double>(ch.row(0) * w)) / u;
      CHECK(l.value_at(embed_complex(w), u) <=
            truth + 1e-9 * std::max(1.0, truth));
    }
  }
}

TEST_CASE("subproblem improves on its expansion point within tolerance") {
  SystemConfig cfg = config_for(4, 4);
  Rng rng(10);
  const Eigen::MatrixXcd h = random_channel(1, 4, rng);
  const double eff_bw = effective_bandwidth(cfg, 0.0, 1);
  const ZfResult zf = zf_initialize(h, cfg, eff_bw);
  REQUIRE(zf.status == SolveStatus::ok);

  SolverSettings settings;
  const SubproblemSolution sol =
      solve_subproblem(h, zf.iterate, cfg, eff_bw, settings);
  CHECK_FALSE(sol.interior_empty);
  CHECK(sol.iterate.sinr_targets[0] >= zf.iterate.sinr_targets[0]);
  CHECK(sol.kkt.residual() <= settings.kkt_tol);
  // The target never exceeds the precoders' true SINR.
  const double actual = sinr(h, sol.iterate.precoders, 0, cfg.noise_power_w);
  CHECK(sol.iterate.sinr_targets[0] <= actual * (1.0 + 1e-9));
}

TEST_CASE("binding QoS shows up in the multipliers") {
  SystemConfig cfg = config_for(4, 4);
  Rng rng(11);
  Eigen::MatrixXcd h = random_channel(2, 4, rng);
  h.row(1) *= 0.02;  // one weak user
  const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
  const double eta_bar = qos_floor(cfg, eff_bw);

  const ZfResult zf = zf_initialize(h, cfg, eff_bw);
  REQUIRE(zf.status == SolveStatus::ok);
  SystemConfig scarce = cfg;
  scarce.power_budget_w = zf.required_power_w * 1.2;  // barely above minimum

  SolverSettings settings;
  const ScaResult res = sca_solve(h, scarce, eff_bw, settings);
  REQUIRE(res.status == SolveStatus::ok);
  CHECK(res.report.per_user_rate_bps[1] ==
        doctest::Approx(scarce.qos_bps).epsilon(1e-3));

  // Re-solve the final subproblem to inspect the multipliers directly.
  DcIterate expansion;
  expansion.precoders = res.precoders;
  expansion.sinr_targets.resize(2);
  for (int k = 0; k < 2; ++k)
    expansion.sinr_targets[k] = sinr(h, res.precoders, k, scarce.noise_power_w);
  expansion.objective_bps = res.report.sum_rate_bps;
  const SubproblemSolution sol =
      solve_subproblem(h, expansion, scarce, eff_bw, settings);
  CHECK(sol.iterate.sinr_targets[1] == doctest::Approx(eta_bar).epsilon(1e-6));
  CHECK(sol.kkt.qos_mult[1] > 1e-6);
  CHECK(sol.kkt.qos_mult[0] < 1e-12);  // strong user unconstrained
}

TEST_CASE("sca reaches the single-user MRT optimum") {
  SystemConfig cfg = config_for(4, 4);
  Rng rng(12);
  SolverSettings settings;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXcd h = random_channel(1, 4, rng);
    const double eff_bw = effective_bandwidth(cfg, 0.0, 1);
    const ScaResult res = sca_solve(h, cfg, eff_bw, settings);
    REQUIRE(res.status == SolveStatus::ok);
    CHECK(res.converged);
    const double optimum =
        eff_bw * std::log2(1.0 + cfg.power_budget_w * h.squaredNorm() /
                                     cfg.noise_power_w);
    CHECK(res.report.sum_rate_bps == doctest::Approx(optimum).epsilon(1e-3));
  }
}

TEST_CASE("sca objective trace is monotone and targets match true SINRs") {
  SystemConfig cfg = config_for(4, 4, 5.0);
  ScenarioConfig scfg;
  scfg.seed = 404;
  scfg.user_min = 2;
  scfg.user_max = 4;
  SolverSettings settings;
  for (std::uint64_t t = 0; t < 30; ++t) {
    const Scenario scen = scenario_at(scfg, cfg, t);
    const double eff_bw = effective_bandwidth(cfg, 0.0, scen.num_users);
    const ScaResult res = sca_solve(scen.channel.entries, cfg, eff_bw, settings);
    REQUIRE(res.status == SolveStatus::ok);
    CHECK(res.converged);
    CHECK(res.max_kkt_residual <= settings.kkt_tol);
    for (std::size_t i = 1; i < res.objective_trace_bps.size(); ++i)
      CHECK(res.objective_trace_bps[i] >=
            res.objective_trace_bps[i - 1] * (1.0 - 1e-9));
    CHECK(res.precoders.total_power_w() <= cfg.power_budget_w * (1.0 + 1e-9));
    const double eta_bar = qos_floor(cfg, eff_bw);
    for (int k = 0; k < scen.num_users; ++k) {
      const double actual =
          sinr(scen.channel.entries, res.precoders, k, cfg.noise_power_w);
      CHECK(actual >= eta_bar * (1.0 - 1e-6));
      CHECK(res.report.per_user_rate_bps[k] ==
            doctest::Approx(eff_bw * std::log2(1.0 + actual)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sca matches the two-user grid oracle") {
  SystemConfig cfg = config_for(2, 2);
  ScenarioConfig scfg;
  scfg.seed = 515;
  scfg.user_min = 2;
  scfg.user_max = 2;
  SolverSettings settings;
  for (std::uint64_t t = 0; t < 3; ++t) {
    const Scenario scen = scenario_at(scfg, cfg, t);
    const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
    const ScaResult res = sca_solve(scen.channel.entries, cfg, eff_bw, settings);
    REQUIRE(res.status == SolveStatus::ok);
    const auto oracle = oracles::two_user_grid_search(
        scen.channel.entries, cfg.power_budget_w, cfg.noise_power_w, eff_bw,
        cfg.qos_bps);
    CHECK(res.report.sum_rate_bps ==
          doctest::Approx(oracle.best_rate_bps).epsilon(2e-3));
  }
}

TEST_CASE("sca propagates infeasibility from the initialization") {
  SystemConfig cfg = config_for(4, 4);
  cfg.qos_bps = 3e7;  // far beyond what the budget supports
  cfg.power_budget_w = 1e-6;
  Rng rng(13);
  const Eigen::MatrixXcd h = random_channel(2, 4, rng);
  const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
  CHECK(sca_solve(h, cfg, eff_bw, SolverSettings{}).status ==
        SolveStatus::infeasible);
}

TEST_CASE("convexity certificate: identity, zero and random PSD cases") {
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1[0] = 1.0;
  CHECK(convexity_certificate(eye, e1, 1.0) >= -1e-9);

  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  CHECK(convexity_certificate(zero, e1, 2.0) == doctest::Approx(0.0));

  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = rng.uniform_int(2, 6);
    Eigen::MatrixXd b(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) b(r, c) = rng.gaussian();
    const Eigen::MatrixXd a = b * b.transpose();
    Eigen::VectorXd x(dim);
    for (int r = 0; r < dim; ++r) x[r] = rng.gaussian();
    CHECK(convexity_certificate(a, x, rng.uniform(0.1, 10.0)) >= -1e-8);
  }
}

TEST_CASE("zero-forcing power control water-fills over decoupled users") {
  SystemConfig cfg = config_for(2, 2);
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
  h(0, 0) = std::complex<double>(4e-4, 0.0);
  h(1, 1) = std::complex<double>(0.0, 1e-4);
  const double eff_bw = effective_bandwidth(cfg, 0.0, 2);
  const double eta_bar = qos_floor(cfg, eff_bw);

  const ZfResult zf = zf_power_control(h, cfg, eff_bw);
  REQUIRE(zf.status == SolveStatus::ok);
  const double g1 = h.row(0).squaredNorm() / cfg.noise_power_w;
  const double g2 = h.row(1).squaredNorm() / cfg.noise_power_w;
  const double reference = oracles::two_user_orthogonal_power_split(
      g1, g2, cfg.power_budget_w, eta_bar / g1, eta_bar / g2, eff_bw);
  CHECK(zf.iterate.objective_bps == doctest::Approx(reference).epsilon(1e-6));
  CHECK(zf.iterate.precoders.total_power_w() ==
        doctest::Approx(cfg.power_budget_w).epsilon(1e-9));

  // Single user: all power on the matched filter.
  Rng rng(15);
  const Eigen::MatrixXcd h1 = random_channel(1, 2, rng);
  const ZfResult single =
      zf_power_control(h1, cfg, effective_bandwidth(cfg, 0.0, 1));
  REQUIRE(single.status == SolveStatus::ok);
  CHECK(single.iterate.sinr_targets[0] ==
        doctest::Approx(cfg.power_budget_w * h1.squaredNorm() /
                        cfg.noise_power_w)
            .epsilon(1e-9));
}
