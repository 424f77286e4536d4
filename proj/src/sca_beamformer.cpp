#include "aspd/sca_beamformer.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace aspd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double qos_sinr_floor(const SystemConfig& cfg, double eff_bw_hz) {
  return std::exp2(cfg.qos_bps / eff_bw_hz) - 1.0;
}

double objective_bps_from_u(const Eigen::VectorXd& u, double eff_bw_hz) {
  double total = 0.0;
  for (int k = 0; k < u.size(); ++k) total += std::log2(1.0 + u[k]);
  return eff_bw_hz * total;
}

/// Convex subproblem in real-composite variables, normalized so the noise
/// power is 1. Variables z = [v_1; ...; v_K; u], v_k = [Re w_k; Im w_k].
/// Constraint order: [power, qos_1..K, dc_1..K].
struct Subproblem {
  int num_users = 0;
  int vdim = 0;  // 2M
  std::vector<Eigen::MatrixXd> quad;  // A_k / sigma^2, symmetric PSD
  std::vector<Eigen::VectorXd> lin;   // surrogate v-coefficients
  Eigen::VectorXd u_coeff;            // surrogate u-coefficients (negative)
  Eigen::VectorXd surr_offset;
  Eigen::VectorXd eta_bar;
  double p_tot = 0.0;

  int nv() const { return num_users * vdim; }
  int nvars() const { return nv() + num_users; }
  int ncons() const { return 2 * num_users + 1; }

  double objective(const Eigen::VectorXd& z) const {  // minimized
    double f = 0.0;
    for (int k = 0; k < num_users; ++k) f -= std::log1p(z[nv() + k]);
    return f;
  }

  Eigen::VectorXd objective_grad(const Eigen::VectorXd& z) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nvars());
    for (int k = 0; k < num_users; ++k)
      g[nv() + k] = -1.0 / (1.0 + z[nv() + k]);
    return g;
  }

  double interference(const Eigen::VectorXd& z, int k) const {
    double total = 0.0;
    for (int i = 0; i < num_users; ++i) {
      if (i == k) continue;
      const auto vi = z.segment(i * vdim, vdim);
      total += vi.dot(quad[static_cast<std::size_t>(k)] * vi);
    }
    return total;
  }

  void eval_constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g) const {
    const int K = num_users;
    g[0] = z.head(nv()).squaredNorm() - p_tot;
    for (int k = 0; k < K; ++k) g[1 + k] = eta_bar[k] - z[nv() + k];
    for (int k = 0; k < K; ++k) {
      const auto vk = z.segment(k * vdim, vdim);
      const double surrogate = lin[static_cast<std::size_t>(k)].dot(vk) +
                               u_coeff[k] * z[nv() + k] + surr_offset[k];
      g[1 + K + k] = interference(z, k) + 1.0 - surrogate;
    }
  }

  /// Constraint gradients as columns of a nvars x ncons matrix.
  void eval_jacobian(const Eigen::VectorXd& z, Eigen::MatrixXd& jac) const {
    const int K = num_users;
    jac.setZero();
    jac.col(0).head(nv()) = 2.0 * z.head(nv());
    for (int k = 0; k < K; ++k) jac(nv() + k, 1 + k) = -1.0;
    for (int k = 0; k < K; ++k) {
      auto col = jac.col(1 + K + k);
      for (int i = 0; i < K; ++i) {
        if (i == k) {
          col.segment(i * vdim, vdim) = -lin[static_cast<std::size_t>(k)];
        } else {
          col.segment(i * vdim, vdim) =
              2.0 * (quad[static_cast<std::size_t>(k)] *
                     z.segment(i * vdim, vdim));
        }
      }
      col[nv() + k] = -u_coeff[k];
    }
  }

  /// Adds the structural (second-derivative) part of sum_j w_j * g_j.
  void add_constraint_hessians(const Eigen::VectorXd& weights,
                               Eigen::MatrixXd& hess) const {
    const int K = num_users;
    hess.topLeftCorner(nv(), nv()).diagonal().array() += 2.0 * weights[0];
    for (int k = 0; k < K; ++k) {
      const double w = weights[1 + K + k];
      if (w == 0.0) continue;
      for (int i = 0; i < K; ++i) {
        if (i == k) continue;
        hess.block(i * vdim, i * vdim, vdim, vdim) +=
            (2.0 * w) * quad[static_cast<std::size_t>(k)];
      }
    }
  }
};

struct BarrierOutcome {
  Eigen::VectorXd z;
  double t = 0.0;
  int newton_steps = 0;
};

[[noreturn]] void throw_stalled(const char* where, double decrement,
                                const Eigen::VectorXd& g) {
  std::ostringstream msg;
  msg << "newton line search stalled in " << where
      << "; decrement=" << decrement << "; constraint values:";
  for (int j = 0; j < g.size(); ++j) msg << ' ' << g[j];
  throw SolverStalled(msg.str());
}

/// Damped Newton descent of phi(z) = f(z) - (1/t) sum log(-g_j(z)) at fixed
/// t. In this scaling grad phi equals the KKT stationarity residual with
/// multipliers 1/(t s_j), so centering is stopped on the gradient norm and
/// the final iterate meets the kkt tolerance directly.
int center(const Subproblem& sp, double t, Eigen::VectorXd& z,
           const SolverSettings& st) {
  const int n = sp.nvars();
  const int m = sp.ncons();
  Eigen::VectorXd g(m), g_trial(m), grad(n), dz(n), z_trial(n);
  Eigen::MatrixXd jac(n, m), hess(n, n);

  auto phi_value = [&](const Eigen::VectorXd& point, Eigen::VectorXd& gbuf) {
    sp.eval_constraints(point, gbuf);
    if ((gbuf.array() >= 0.0).any()) return kInf;
    double val = sp.objective(point);
    for (int j = 0; j < m; ++j) val -= std::log(-gbuf[j]) / t;
    return val;
  };

  int steps = 0;
  int plateau = 0;
  double phi = phi_value(z, g);
  if (!std::isfinite(phi))
    throw SolverStalled("barrier centering started from an infeasible point");
  for (int it = 0; it < st.max_newton_iters; ++it) {
    const Eigen::VectorXd f_grad = sp.objective_grad(z);
    grad = f_grad;
    sp.eval_jacobian(z, jac);
    hess.setZero();
    for (int k = 0; k < sp.num_users; ++k) {
      const double u = z[sp.nv() + k];
      hess(sp.nv() + k, sp.nv() + k) += 1.0 / ((1.0 + u) * (1.0 + u));
    }
    Eigen::VectorXd mult(m);
    for (int j = 0; j < m; ++j) mult[j] = 1.0 / (t * (-g[j]));
    sp.add_constraint_hessians(mult, hess);
    for (int j = 0; j < m; ++j) {
      grad.noalias() += mult[j] * jac.col(j);
      hess.noalias() +=
          (t * mult[j] * mult[j]) * jac.col(j) * jac.col(j).transpose();
    }

    const double stat_scale = std::max(1.0, f_grad.lpNorm<Eigen::Infinity>());
    if (grad.lpNorm<Eigen::Infinity>() <= 0.05 * st.kkt_tol * stat_scale) break;

    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) {
      hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().maxCoeff());
      llt.compute(hess);
      if (llt.info() != Eigen::Success)
        throw SolverStalled("barrier hessian factorization failed");
    }
    dz = -llt.solve(grad);
    const double decrement = -grad.dot(dz);
    if (std::getenv("ASPD_TRACE"))
      std::fprintf(stderr,
                   "    center t=%.3g it=%d |grad|=%.3g dec=%.3g minslack=%.3g "
                   "maxdiag=%.3g\n",
                   t, it, grad.lpNorm<Eigen::Infinity>(), decrement,
                   (-g).minCoeff(), hess.diagonal().maxCoeff());
    if (decrement <= st.newton_tol) break;

    const double slope = grad.dot(dz);
    double alpha = 1.0;
    bool accepted = false;
    const double slack = 1e-14 * (1.0 + std::abs(phi));
    const double phi_before = phi;
    for (int ls = 0; ls < 60; ++ls) {
      z_trial = z + alpha * dz;
      const double phi_trial = phi_value(z_trial, g_trial);
      if (phi_trial <= phi + 0.01 * alpha * slope + slack) {
        z = z_trial;
        g = g_trial;
        phi = phi_trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++steps;
    // Progress below the floating-point floor ends the stage; the closing
    // KKT check decides whether the point is good enough.
    if (!accepted) break;
    if (phi_before - phi <= 10.0 * slack) {
      if (++plateau >= 3) break;
    } else {
      plateau = 0;
    }
  }
  return steps;
}

/// Searches for a strictly interior point of the subproblem by minimizing
/// the max scaled infeasibility, starting from the expansion point (which
/// sits on the boundary). Returns false when the interior is empty.
bool find_interior(const Subproblem& sp, Eigen::VectorXd& z,
                   const SolverSettings& st, int& newton_steps) {
  const int n = sp.nvars();
  const int m = sp.ncons();
  Eigen::VectorXd scale(m);
  {
    Eigen::VectorXd g0(m);
    sp.eval_constraints(z, g0);
    scale[0] = std::max(1.0, sp.p_tot);
    for (int k = 0; k < sp.num_users; ++k)
      scale[1 + k] = std::max(1.0, sp.eta_bar[k]);
    for (int k = 0; k < sp.num_users; ++k) {
      const double anchor = std::abs(sp.interference(z, k)) + 1.0;
      scale[1 + sp.num_users + k] = std::max(1.0, anchor);
    }
  }

  auto scaled_max = [&](const Eigen::VectorXd& point, Eigen::VectorXd& gbuf) {
    sp.eval_constraints(point, gbuf);
    return (gbuf.array() / scale.array()).maxCoeff();
  };

  Eigen::VectorXd g(m);
  constexpr double kExitMargin = 1e-5;
  if (scaled_max(z, g) < -kExitMargin) return true;

  double s = scaled_max(z, g) + 1.0;
  Eigen::VectorXd grad(n + 1), dy(n + 1), z_trial(n), g_trial(m);
  Eigen::MatrixXd jac(n, m), hess(n + 1, n + 1);

  auto phi_value = [&](const Eigen::VectorXd& point, double s_point,
                       Eigen::VectorXd& gbuf) {
    sp.eval_constraints(point, gbuf);
    double val = 0.0;
    for (int j = 0; j < m; ++j) {
      const double r = s_point - gbuf[j] / scale[j];
      if (r <= 0.0) return kInf;
      val -= std::log(r);
    }
    return val;  // t*s added by caller
  };

  double t = 1.0;
  for (int stage = 0; stage < 60; ++stage) {
    double phi = t * s + phi_value(z, s, g);
    for (int it = 0; it < st.max_newton_iters; ++it) {
      sp.eval_jacobian(z, jac);
      grad.setZero();
      hess.setZero();
      grad[n] = t;
      Eigen::VectorXd inv_r(m), hess_weight(m);
      for (int j = 0; j < m; ++j) inv_r[j] = 1.0 / (s - g[j] / scale[j]);
      for (int j = 0; j < m; ++j) {
        const Eigen::VectorXd gj = jac.col(j) / scale[j];
        grad.head(n).noalias() += inv_r[j] * gj;
        grad[n] -= inv_r[j];
        const double w2 = inv_r[j] * inv_r[j];
        hess.topLeftCorner(n, n).noalias() += w2 * gj * gj.transpose();
        hess.col(n).head(n).noalias() -= w2 * gj;
        hess(n, n) += w2;
        hess_weight[j] = inv_r[j] / scale[j];
      }
      hess.row(n).head(n) = hess.col(n).head(n).transpose();
      {
        Eigen::MatrixXd structural = Eigen::MatrixXd::Zero(n, n);
        sp.add_constraint_hessians(hess_weight, structural);
        hess.topLeftCorner(n, n) += structural;
      }

      Eigen::LLT<Eigen::MatrixXd> llt(hess);
      if (llt.info() != Eigen::Success) {
        hess.diagonal().array() += 1e-10 * (1.0 + hess.diagonal().maxCoeff());
        llt.compute(hess);
        if (llt.info() != Eigen::Success)
          throw SolverStalled("phase-1 hessian factorization failed");
      }
      dy = -llt.solve(grad);
      const double decrement = -grad.dot(dy);
      if (0.5 * decrement <= st.newton_tol) break;

      const double slope = grad.dot(dy);
      double alpha = 1.0;
      bool accepted = false;
      const double slack = 1e-13 * (1.0 + std::abs(phi));
      for (int ls = 0; ls < 60; ++ls) {
        z_trial = z + alpha * dy.head(n);
        const double s_trial = s + alpha * dy[n];
        const double phi_trial =
            t * s_trial + phi_value(z_trial, s_trial, g_trial);
        if (phi_trial <= phi + 0.01 * alpha * slope + slack) {
          z = z_trial;
          s = s_trial;
          g = g_trial;
          phi = phi_trial;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      ++newton_steps;
      if (!accepted) throw_stalled("phase 1", decrement, g);
      if ((g.array() / scale.array()).maxCoeff() < -kExitMargin) return true;
    }
    const double max_scaled = (g.array() / scale.array()).maxCoeff();
    if (max_scaled < -kExitMargin) return true;
    if (static_cast<double>(m) / t < 1e-12 || t > 1e18)
      return max_scaled < -1e-12;
    t *= st.barrier_mu;
  }
  return (g.array() / scale.array()).maxCoeff() < -1e-12;
}

BarrierOutcome solve_barrier(const Subproblem& sp, Eigen::VectorXd z,
                             const SolverSettings& st, int& newton_steps) {
  const int m = sp.ncons();
  double t = static_cast<double>(m) /
             std::max(0.5 * (1.0 + std::abs(sp.objective(z))), 1e-3);
  for (int stage = 0; stage < 80; ++stage) {
    newton_steps += center(sp, t, z, st);
    const double gap = static_cast<double>(m) / t;
    if (gap <= st.barrier_rel_gap * (1.0 + std::abs(sp.objective(z))))
      return {std::move(z), t, newton_steps};
    t *= st.barrier_mu;
  }
  return {std::move(z), t, newton_steps};
}

/// Lawson-Hanson nonnegative least squares: min ||a_in x - b|| over x >= 0.
/// Columns are normalized first so the selection test is scale-free; the
/// column count here is the constraint count (a handful), so the active-set
/// loop is cheap.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a_in, const Eigen::VectorXd& b) {
  const int m = static_cast<int>(a_in.cols());
  Eigen::MatrixXd a = a_in;
  Eigen::VectorXd col_scale(m);
  for (int j = 0; j < m; ++j) {
    col_scale[j] = a.col(j).norm();
    if (col_scale[j] > 0.0) a.col(j) /= col_scale[j];
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  std::vector<bool> passive(static_cast<std::size_t>(m), false);
  Eigen::VectorXd w = a.transpose() * b;
  const double tol = 1e-10 * b.norm() + 1e-300;

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<int> idx;
    for (int j = 0; j < m; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    Eigen::MatrixXd cols(a.rows(), static_cast<int>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
      cols.col(static_cast<int>(c)) = a.col(idx[c]);
    const Eigen::VectorXd fit = cols.colPivHouseholderQr().solve(b);
    z.setZero();
    for (std::size_t c = 0; c < idx.size(); ++c)
      z[idx[c]] = fit[static_cast<int>(c)];
  };

  for (int outer = 0; outer < 3 * m + 10; ++outer) {
    int best = -1;
    double best_w = tol;
    for (int j = 0; j < m; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    Eigen::VectorXd z(m);
    for (int inner = 0; inner < 3 * m + 10; ++inner) {
      solve_passive(z);
      bool all_positive = true;
      double alpha = 1.0;
      for (int j = 0; j < m; ++j) {
        if (!passive[static_cast<std::size_t>(j)] || z[j] > 0.0) continue;
        all_positive = false;
        alpha = std::min(alpha, x[j] / (x[j] - z[j]));
      }
      if (all_positive) {
        x = z;
        break;
      }
      x += alpha * (z - x);
      for (int j = 0; j < m; ++j)
        if (passive[static_cast<std::size_t>(j)] && x[j] <= tol)
          passive[static_cast<std::size_t>(j)] = false;
    }
    w = a.transpose() * (b - a * x);
  }
  for (int j = 0; j < m; ++j)
    if (col_scale[j] > 0.0) x[j] /= col_scale[j];
  return x.cwiseMax(0.0);
}

/// Multipliers recovered by a nonnegative least-squares fit of the
/// stationarity condition. The barrier values 1/(t s_j) would inherit the
/// floating-point noise of the tiny active slacks; the fit only touches the
/// (stably evaluated) gradients, so the residual reflects the actual
/// distance to a KKT point.
KktInfo compute_kkt(const Subproblem& sp, const Eigen::VectorXd& z, double t) {
  const int n = sp.nvars();
  const int m = sp.ncons();
  KktInfo info;
  Eigen::VectorXd g(m);
  sp.eval_constraints(z, g);
  Eigen::MatrixXd jac(n, m);
  sp.eval_jacobian(z, jac);
  const Eigen::VectorXd f_grad = sp.objective_grad(z);

  const Eigen::VectorXd lambda = nnls(jac, -f_grad);

  const Eigen::VectorXd resid = f_grad + jac * lambda;
  const double f_scale = std::max(1.0, f_grad.lpNorm<Eigen::Infinity>());
  info.stationarity = resid.lpNorm<Eigen::Infinity>() / f_scale;
  double comp_gap = 0.0;
  for (int j = 0; j < m; ++j) comp_gap += lambda[j] * std::max(-g[j], 0.0);
  info.rel_gap = std::min(comp_gap, static_cast<double>(m) / t) /
                 std::max(1.0, std::abs(sp.objective(z)));
  info.max_violation = std::max(0.0, g.maxCoeff());
  info.power_mult = lambda[0];
  info.qos_mult = lambda.segment(1, sp.num_users);
  info.dc_mult = lambda.segment(1 + sp.num_users, sp.num_users);
  return info;
}

Eigen::MatrixXcd unstack_precoders(const Eigen::VectorXd& z, int num_users,
                                   int m_antennas) {
  Eigen::MatrixXcd w(m_antennas, num_users);
  for (int k = 0; k < num_users; ++k) {
    const auto vk = z.segment(k * 2 * m_antennas, 2 * m_antennas);
    for (int a = 0; a < m_antennas; ++a)
      w(a, k) = {vk[a], vk[m_antennas + a]};
  }
  return w;
}

Subproblem build_subproblem(const Eigen::MatrixXcd& channel_sub,
                            const DcIterate& expansion,
                            const SystemConfig& cfg, double eff_bw_hz) {
  const int K = static_cast<int>(channel_sub.rows());
  const int M = static_cast<int>(channel_sub.cols());
  const double noise_amp = std::sqrt(cfg.noise_power_w);

  Subproblem sp;
  sp.num_users = K;
  sp.vdim = 2 * M;
  sp.p_tot = cfg.power_budget_w;
  sp.eta_bar = Eigen::VectorXd::Constant(K, qos_sinr_floor(cfg, eff_bw_hz));
  sp.quad.reserve(static_cast<std::size_t>(K));
  sp.lin.resize(static_cast<std::size_t>(K));
  sp.u_coeff.resize(K);
  sp.surr_offset.resize(K);
  for (int k = 0; k < K; ++k) {
    const Eigen::RowVectorXcd scaled_row = channel_sub.row(k) / noise_amp;
    sp.quad.push_back(embed_quadratic_form(scaled_row));
    const double u_hat = expansion.sinr_targets[k];
    if (!(u_hat > 0.0))
      throw std::invalid_argument("expansion sinr target must be positive");
    const Eigen::VectorXd v_hat =
        embed_complex(expansion.precoders.columns.col(k));
    const Eigen::MatrixXd& a = sp.quad.back();
    const Eigen::VectorXd av = a * v_hat;
    sp.lin[static_cast<std::size_t>(k)] = (av + a.transpose() * v_hat) / u_hat;
    sp.u_coeff[k] = -v_hat.dot(av) / (u_hat * u_hat);
    sp.surr_offset[k] = (v_hat.dot(av) - v_hat.dot(a.transpose() * v_hat)) / u_hat;
  }
  return sp;
}

}  // namespace

Eigen::VectorXd embed_complex(const Eigen::VectorXcd& w) {
  const int m = static_cast<int>(w.size());
  Eigen::VectorXd v(2 * m);
  v.head(m) = w.real();
  v.tail(m) = w.imag();
  return v;
}

Eigen::MatrixXd embed_quadratic_form(const Eigen::RowVectorXcd& h) {
  const int m = static_cast<int>(h.size());
  Eigen::VectorXd r(2 * m), s(2 * m);
  r.head(m) = h.real().transpose();
  r.tail(m) = -h.imag().transpose();
  s.head(m) = h.imag().transpose();
  s.tail(m) = h.real().transpose();
  return r * r.transpose() + s * s.transpose();
}

ZfResult zf_initialize(const Eigen::MatrixXcd& channel_sub,
                       const SystemConfig& cfg, double eff_bw_hz,
                       double cond_guard) {
  const int K = static_cast<int>(channel_sub.rows());
  const int M = static_cast<int>(channel_sub.cols());
  if (K > M)
    throw std::invalid_argument("zero forcing needs num_users <= active antennas");

  ZfResult result;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(
      channel_sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[K - 1] <= 0.0 || sv[0] / sv[K - 1] > cond_guard) {
    result.status = SolveStatus::rank_deficient;
    return result;
  }
  // Pseudo-inverse columns: H pinv(H) = I, so h_i p_j = delta_ij.
  const Eigen::MatrixXcd pinv =
      svd.matrixV() * sv.cwiseInverse().asDiagonal() *
      svd.matrixU().adjoint();

  const double eta_bar = qos_sinr_floor(cfg, eff_bw_hz);
  Eigen::MatrixXcd w(M, K);
  double required = 0.0;
  for (int k = 0; k < K; ++k) {
    const double amp = std::sqrt(cfg.noise_power_w * eta_bar);
    w.col(k) = amp * pinv.col(k);
    required += w.col(k).squaredNorm();
  }
  result.required_power_w = required;
  if (required > cfg.power_budget_w * (1.0 + 1e-12)) {
    result.status = SolveStatus::infeasible;
    return result;
  }

  result.iterate.precoders.columns = std::move(w);
  result.iterate.sinr_targets.resize(K);
  for (int k = 0; k < K; ++k)
    result.iterate.sinr_targets[k] =
        sinr(channel_sub, result.iterate.precoders, k, cfg.noise_power_w);
  result.iterate.objective_bps =
      objective_bps_from_u(result.iterate.sinr_targets, eff_bw_hz);
  return result;
}

DcLinearization dc_linearize(const Eigen::MatrixXcd& channel_sub,
                             const PrecodingMatrix& w_hat,
                             const Eigen::VectorXd& u_hat, int user) {
  const double u = u_hat[user];
  if (!(u > 0.0))
    throw std::invalid_argument("dc_linearize needs a positive sinr target");
  const Eigen::MatrixXd a = embed_quadratic_form(channel_sub.row(user));
  const Eigen::VectorXd v = embed_complex(w_hat.columns.col(user));
  const Eigen::VectorXd av = a * v;
  const Eigen::VectorXd atv = a.transpose() * v;

  DcLinearization out;
  out.v_coeff = (av + atv) / u;
  out.u_coeff = -v.dot(av) / (u * u);
  out.offset = (v.dot(av) - v.dot(atv)) / u;
  const double sym_scale = std::max(1.0, std::abs(v.dot(av) + v.dot(atv)) / u);
  if (std::abs(out.offset) > 1e-12 * sym_scale)
    throw std::logic_error("antisymmetric surrogate term survived a Hermitian form");
  return out;
}

SubproblemSolution solve_subproblem(const Eigen::MatrixXcd& channel_sub,
                                    const DcIterate& expansion,
                                    const SystemConfig& cfg, double eff_bw_hz,
                                    const SolverSettings& settings) {
  const int K = static_cast<int>(channel_sub.rows());
  const int M = static_cast<int>(channel_sub.cols());
  const Subproblem sp = build_subproblem(channel_sub, expansion, cfg, eff_bw_hz);

  Eigen::VectorXd z(sp.nvars());
  for (int k = 0; k < K; ++k)
    z.segment(k * sp.vdim, sp.vdim) =
        embed_complex(expansion.precoders.columns.col(k));
  z.tail(K) = expansion.sinr_targets;

  SubproblemSolution sol;
  if (!find_interior(sp, z, settings, sol.newton_steps)) {
    sol.iterate = expansion;
    sol.interior_empty = true;
    return sol;
  }

  const BarrierOutcome out = solve_barrier(sp, std::move(z), settings,
                                           sol.newton_steps);
  sol.kkt = compute_kkt(sp, out.z, out.t);
  if (sol.kkt.residual() > settings.kkt_tol) {
    std::ostringstream msg;
    msg << "subproblem finished with kkt residual " << sol.kkt.residual()
        << " > " << settings.kkt_tol << " (stationarity " << sol.kkt.stationarity
        << ", gap " << sol.kkt.rel_gap << ")";
    throw SolverStalled(msg.str());
  }

  sol.iterate.precoders.columns = unstack_precoders(out.z, K, M);
  sol.iterate.sinr_targets = out.z.tail(K);
  sol.iterate.objective_bps =
      objective_bps_from_u(sol.iterate.sinr_targets, eff_bw_hz);
  return sol;
}

ScaResult sca_solve(const Eigen::MatrixXcd& channel_sub,
                    const SystemConfig& cfg, double eff_bw_hz,
                    const SolverSettings& settings) {
  ScaResult result;
  const ZfResult init =
      zf_initialize(channel_sub, cfg, eff_bw_hz, settings.cond_guard);
  if (init.status != SolveStatus::ok) {
    result.status = init.status;
    return result;
  }

  DcIterate current = init.iterate;
  // Spend the whole budget along the zero-forcing directions: interference
  // stays zero, every SINR scales up, so QoS still holds and the SCA starts
  // from a much better feasible point than the minimum-power one.
  const double headroom = cfg.power_budget_w / init.required_power_w;
  if (headroom > 1.0) {
    current.precoders.columns *= std::sqrt(0.999 * headroom);
    for (int k = 0; k < current.sinr_targets.size(); ++k)
      current.sinr_targets[k] =
          sinr(channel_sub, current.precoders, k, cfg.noise_power_w);
    current.objective_bps =
        objective_bps_from_u(current.sinr_targets, eff_bw_hz);
  }
  result.objective_trace_bps.push_back(current.objective_bps);
  for (int iter = 1; iter <= settings.max_outer_iters; ++iter) {
    const SubproblemSolution sol =
        solve_subproblem(channel_sub, current, cfg, eff_bw_hz, settings);
    if (sol.interior_empty) {
      result.converged = true;
      break;
    }
    result.outer_iters = iter;
    result.max_kkt_residual =
        std::max(result.max_kkt_residual, sol.kkt.residual());
    const double previous = current.objective_bps;
    current = sol.iterate;
    result.objective_trace_bps.push_back(current.objective_bps);
    if (std::abs(current.objective_bps - previous) <
        settings.outer_tol_rel * std::abs(previous)) {
      result.converged = true;
      break;
    }
  }

  result.precoders = current.precoders;
  result.report = sum_rate(channel_sub, result.precoders, cfg, 0.0);
  return result;
}

double convexity_certificate(const Eigen::MatrixXd& a_psd,
                             const Eigen::VectorXd& x, double y) {
  if (!(y > 0.0)) throw std::invalid_argument("y must be positive");
  const int n = static_cast<int>(x.size());
  const Eigen::MatrixXd sym = a_psd + a_psd.transpose();
  const Eigen::VectorXd sym_x = sym * x;

  Eigen::MatrixXd hess(n + 1, n + 1);
  hess.topLeftCorner(n, n) = sym / y;
  hess.col(n).head(n) = -sym_x / (y * y);
  hess.row(n).head(n) = hess.col(n).head(n).transpose();
  hess(n, n) = 2.0 * x.dot(a_psd * x) / (y * y * y);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess,
                                                     Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

ZfResult zf_power_control(const Eigen::MatrixXcd& channel_sub,
                          const SystemConfig& cfg, double eff_bw_hz,
                          double cond_guard) {
  const int K = static_cast<int>(channel_sub.rows());
  const int M = static_cast<int>(channel_sub.cols());
  if (K > M)
    throw std::invalid_argument("zero forcing needs num_users <= active antennas");

  ZfResult result;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(
      channel_sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[K - 1] <= 0.0 || sv[0] / sv[K - 1] > cond_guard) {
    result.status = SolveStatus::rank_deficient;
    return result;
  }
  const Eigen::MatrixXcd pinv =
      svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().adjoint();

  // Unit ZF directions and their effective SINR-per-watt gains.
  Eigen::MatrixXcd dirs(M, K);
  Eigen::VectorXd gain(K), floor_w(K);
  const double eta_bar = qos_sinr_floor(cfg, eff_bw_hz);
  double floor_total = 0.0;
  for (int k = 0; k < K; ++k) {
    const double norm = pinv.col(k).norm();
    dirs.col(k) = pinv.col(k) / norm;
    gain[k] = 1.0 / (cfg.noise_power_w * norm * norm);
    floor_w[k] = eta_bar / gain[k];
    floor_total += floor_w[k];
  }
  result.required_power_w = floor_total;
  if (floor_total > cfg.power_budget_w * (1.0 + 1e-12)) {
    result.status = SolveStatus::infeasible;
    return result;
  }

  // Water-filling with per-user floors: p_k = max(floor_k, nu - 1/gain_k).
  auto allocated = [&](double nu) {
    double total = 0.0;
    for (int k = 0; k < K; ++k)
      total += std::max(floor_w[k], nu - 1.0 / gain[k]);
    return total;
  };
  double lo = 0.0, hi = cfg.power_budget_w + gain.cwiseInverse().maxCoeff() +
                        floor_w.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (allocated(mid) > cfg.power_budget_w) hi = mid;
    else lo = mid;
  }
  const double nu = 0.5 * (lo + hi);

  Eigen::MatrixXcd w(M, K);
  result.iterate.sinr_targets.resize(K);
  for (int k = 0; k < K; ++k) {
    const double p = std::max(floor_w[k], nu - 1.0 / gain[k]);
    w.col(k) = std::sqrt(p) * dirs.col(k);
    result.iterate.sinr_targets[k] = p * gain[k];
  }
  result.iterate.precoders.columns = std::move(w);
  result.iterate.objective_bps =
      objective_bps_from_u(result.iterate.sinr_targets, eff_bw_hz);
  return result;
}

}  // namespace aspd
