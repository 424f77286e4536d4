#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "aspd/core_model.hpp"

namespace aspd {

// Solves the sum-rate precoding problem for a fixed antenna subset. The
// SINR constraints are handled through their difference-of-convex form:
// |h_k w_k|^2 / u_k is jointly convex in (w_k, u_k), so replacing it by its
// first-order expansion gives a convex program that is solved repeatedly,
// re-anchoring the expansion at each solution (successive convex
// approximation). Complex precoders are handled through the real-composite
// embedding: w -> [Re w; Im w], under which |h w|^2 becomes a symmetric
// positive-semidefinite quadratic form.

struct SolverSettings {
  double outer_tol_rel = 1e-3;   // stop when relative objective change drops below
  int max_outer_iters = 50;
  double barrier_rel_gap = 1e-10;  // duality gap target, relative to objective
  double newton_tol = 1e-13;       // half squared Newton decrement
  int max_newton_iters = 400;      // per barrier stage
  double barrier_mu = 100.0;       // barrier parameter growth factor
  double kkt_tol = 1e-6;
  double cond_guard = 1e12;        // condition-number limit for ZF pseudo-inverse
};

/// One SCA iterate: precoders plus the per-user SINR targets u.
struct DcIterate {
  PrecodingMatrix precoders;
  Eigen::VectorXd sinr_targets;  // u_k >= eta_bar_k
  double objective_bps = 0.0;    // eff_bw * sum log2(1 + u_k)
};

enum class SolveStatus { ok, infeasible, rank_deficient };

struct ZfResult {
  SolveStatus status = SolveStatus::ok;
  DcIterate iterate;             // valid when status == ok
  double required_power_w = 0.0; // ZF power needed to meet QoS exactly
};

/// Coefficients of the affine surrogate that replaces |h_k w_k|^2 / u_k:
///   surrogate(w_k, u_k) = v_coeff . [Re w_k; Im w_k] + u_coeff * u_k + offset
/// The constraint served to the convex subproblem is
///   sum_{i != k} |h_k w_i|^2 + sigma^2 <= surrogate(w_k, u_k).
struct DcLinearization {
  Eigen::VectorXd v_coeff;  // (A + A^T) v_hat / u_hat, A the embedded h_k^H h_k
  double u_coeff = 0.0;     // - v_hat^T A v_hat / u_hat^2
  double offset = 0.0;      // v_hat^T (A - A^T) v_hat / u_hat; 0 for Hermitian forms

  double value_at(const Eigen::VectorXd& v_k, double u_k) const {
    return v_coeff.dot(v_k) + u_coeff * u_k + offset;
  }
};

/// Multipliers and residuals of the convex subproblem at its solution.
struct KktInfo {
  double stationarity = 0.0;   // scaled inf-norm of the Lagrangian gradient
  double rel_gap = 0.0;        // duality gap / max(1, |objective|)
  double max_violation = 0.0;  // positive part of the constraints
  double power_mult = 0.0;
  Eigen::VectorXd qos_mult;
  Eigen::VectorXd dc_mult;

  double residual() const {
    return std::max({stationarity, rel_gap, max_violation});
  }
};

struct SubproblemSolution {
  DcIterate iterate;
  KktInfo kkt;
  int newton_steps = 0;
  bool interior_empty = false;  // feasible set had no strict interior; expansion returned
};

struct ScaResult {
  SolveStatus status = SolveStatus::ok;
  PrecodingMatrix precoders;
  RateReport report;  // recomputed from the precoders, tau_pro = 0
  std::vector<double> objective_trace_bps;  // entry 0 = initialization
  int outer_iters = 0;
  bool converged = false;
  double max_kkt_residual = 0.0;
};

// Real-composite embedding helpers (shared with tests).

/// [Re w; Im w] for a complex vector.
Eigen::VectorXd embed_complex(const Eigen::VectorXcd& w);

/// Symmetric PSD 2M x 2M matrix A with v^T A v = |h w|^2 for v = embed(w).
Eigen::MatrixXd embed_quadratic_form(const Eigen::RowVectorXcd& h);

/// Zero-forcing initialization: pseudo-inverse directions scaled so every
/// user meets its QoS rate exactly with zero inter-user interference.
/// Infeasible when that costs more than the power budget; rank_deficient
/// when the user channels are (numerically) linearly dependent.
ZfResult zf_initialize(const Eigen::MatrixXcd& channel_sub,
                       const SystemConfig& cfg, double eff_bw_hz,
                       double cond_guard = 1e12);

/// First-order expansion of |h_k w_k|^2 / u_k at (w_hat_k, u_hat_k); keeps
/// the full three-term form and checks that the antisymmetric remainder
/// vanishes for the Hermitian channel form.
DcLinearization dc_linearize(const Eigen::MatrixXcd& channel_sub,
                             const PrecodingMatrix& w_hat,
                             const Eigen::VectorXd& u_hat, int user);

/// Solves the convex subproblem anchored at `expansion`: maximize
/// eff_bw * sum log2(1 + u_k) subject to QoS floors, the power budget and
/// the per-user linearized SINR constraints. Log-barrier Newton method with
/// a short phase-I search for a strictly interior start.
SubproblemSolution solve_subproblem(const Eigen::MatrixXcd& channel_sub,
                                    const DcIterate& expansion,
                                    const SystemConfig& cfg, double eff_bw_hz,
                                    const SolverSettings& settings);

/// Full SCA loop: zero-forcing start, then convex subproblems until the
/// relative objective change drops below outer_tol_rel. The reported rate
/// is recomputed from the returned precoders, not from the targets u.
ScaResult sca_solve(const Eigen::MatrixXcd& channel_sub,
                    const SystemConfig& cfg, double eff_bw_hz,
                    const SolverSettings& settings);

/// Minimum eigenvalue of the Hessian of F(x, y) = x^T A x / y, assembled
/// from its closed-form block structure. Nonnegative whenever A is PSD and
/// y > 0, which is what makes the DC linearization a global under-estimator.
double convexity_certificate(const Eigen::MatrixXd& a_psd,
                             const Eigen::VectorXd& x, double y);

/// Zero-forcing baseline precoder: pseudo-inverse directions with power
/// allocated by water-filling over the per-user effective gains, subject to
/// QoS floors and the total budget.
ZfResult zf_power_control(const Eigen::MatrixXcd& channel_sub,
                          const SystemConfig& cfg, double eff_bw_hz,
                          double cond_guard = 1e12);

}  // namespace aspd
