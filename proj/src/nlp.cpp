#include "carebot/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace carebot::nlp {

namespace {

Eigen::VectorXd eval_eq(const NlpProblem& nlp, const Eigen::VectorXd& w) {
  return nlp.eq_dim > 0 ? nlp.eq(w) : Eigen::VectorXd::Zero(0);
}

Eigen::VectorXd eval_ineq(const NlpProblem& nlp, const Eigen::VectorXd& w) {
  return nlp.ineq_dim > 0 ? nlp.ineq(w) : Eigen::VectorXd::Zero(0);
}

Eigen::VectorXd lagrangian_grad(const NlpProblem& nlp, const KktPoint& p) {
  Eigen::VectorXd g = nlp.cost_grad(p.primal);
  if (nlp.eq_dim > 0) g += nlp.eq_jac(p.primal).transpose() * p.eq_duals;
  if (nlp.ineq_dim > 0) g += nlp.ineq_jac(p.primal).transpose() * p.ineq_duals;
  return g;
}

Eigen::MatrixXd fd_lagrangian_hessian(const NlpProblem& nlp, const KktPoint& p) {
  const int n = nlp.dim;
  Eigen::MatrixXd hess(n, n);
  KktPoint probe = p;
  for (int i = 0; i < n; ++i) {
    const double step = 1e-5 * (1.0 + std::abs(p.primal(i)));
    probe.primal = p.primal;
    probe.primal(i) += step;
    const Eigen::VectorXd gp = lagrangian_grad(nlp, probe);
    probe.primal(i) = p.primal(i) - step;
    const Eigen::VectorXd gm = lagrangian_grad(nlp, probe);
    hess.col(i) = (gp - gm) / (2.0 * step);
  }
  return ((hess + hess.transpose()) / 2.0).eval();
}

double merit_value(const NlpProblem& nlp, const Eigen::VectorXd& w, double nu) {
  double v = nlp.cost(w);
  if (nlp.eq_dim > 0) v += nu * eval_eq(nlp, w).lpNorm<1>();
  if (nlp.ineq_dim > 0) v += nu * eval_ineq(nlp, w).cwiseMax(0.0).lpNorm<1>();
  return v;
}

}  // namespace

double kkt_residual(const NlpProblem& nlp, const KktPoint& p) {
  double r = lagrangian_grad(nlp, p).lpNorm<Eigen::Infinity>();
  if (nlp.eq_dim > 0) {
    r = std::max(r, eval_eq(nlp, p.primal).lpNorm<Eigen::Infinity>());
  }
  if (nlp.ineq_dim > 0) {
    const Eigen::VectorXd h = eval_ineq(nlp, p.primal);
    for (int i = 0; i < nlp.ineq_dim; ++i) {
      r = std::max(r, h(i));
      r = std::max(r, -p.ineq_duals(i));
      r = std::max(r, std::abs(p.ineq_duals(i) * h(i)));
    }
  }
  return r;
}

SqpStepResult sqp_step(const NlpProblem& nlp, const KktPoint& point,
                       const SqpOptions& options) {
  SqpStepResult result;
  const Eigen::VectorXd& w = point.primal;

  qp::QpProblemd local;
  local.gradient = nlp.cost_grad(w);
  local.hessian = nlp.lagrangian_hessian
                      ? nlp.lagrangian_hessian(w, point.eq_duals, point.ineq_duals)
                      : fd_lagrangian_hessian(nlp, point);
  Eigen::VectorXd g = eval_eq(nlp, w);
  Eigen::VectorXd h = eval_ineq(nlp, w);
  local.eq_matrix = nlp.eq_dim > 0 ? nlp.eq_jac(w) : Eigen::MatrixXd(0, nlp.dim);
  local.eq_rhs = -g;
  local.ineq_matrix =
      nlp.ineq_dim > 0 ? nlp.ineq_jac(w) : Eigen::MatrixXd(0, nlp.dim);
  local.ineq_rhs = -h;

  qp::QpOptions qp_opts;
  qp_opts.warm_active = options.warm_active;
  const qp::QpSolutiond qp_sol = qp::solve_qp(local, 1e-10, qp_opts);
  if (qp_sol.status == qp::QpStatus::infeasible) {
    result.status = SqpStatus::qp_infeasible;
    result.point = point;
    return result;
  }
  result.qp_active_set = qp_sol.active_set;

  const Eigen::VectorXd& dw = qp_sol.primal;
  const Eigen::VectorXd dl = qp_sol.eq_duals - point.eq_duals;
  const Eigen::VectorXd dm = qp_sol.ineq_duals - point.ineq_duals;
  result.step_norm = dw.lpNorm<Eigen::Infinity>();

  double dual_max = 0.0;
  if (qp_sol.eq_duals.size() > 0) {
    dual_max = qp_sol.eq_duals.lpNorm<Eigen::Infinity>();
  }
  if (qp_sol.ineq_duals.size() > 0) {
    dual_max = std::max(dual_max, qp_sol.ineq_duals.lpNorm<Eigen::Infinity>());
  }
  const double nu = 2.0 * dual_max + 1.0;

  // Descent model for the l1 merit: linear cost change minus the full
  // infeasibility (the QP step removes the linearized violation).
  const double infeas = g.lpNorm<1>() + h.cwiseMax(0.0).lpNorm<1>();
  const double descent = local.gradient.dot(dw) - nu * infeas;

  const double phi0 = merit_value(nlp, w, nu);
  double alpha = 1.0;
  bool accepted = false;
  if (result.step_norm <= 1e-14 * (1.0 + w.lpNorm<Eigen::Infinity>())) {
    accepted = true;  // already at a stationary point of the local model
  } else {
    for (int halvings = 0; halvings <= 30; ++halvings) {
      const double phi = merit_value(nlp, w + alpha * dw, nu);
      const double armijo =
          phi0 + 1e-4 * alpha * std::min(descent, 0.0) + 1e-12 * (1.0 + std::abs(phi0));
      if (phi <= armijo) {
        accepted = true;
        break;
      }
      alpha /= 2.0;
    }
  }
  if (!accepted) {
    result.status = SqpStatus::line_search_failure;
    result.point = point;
    return result;
  }

  result.alpha = alpha;
  result.point.primal = w + alpha * dw;
  result.point.eq_duals = point.eq_duals + alpha * dl;
  result.point.ineq_duals = (point.ineq_duals + alpha * dm).cwiseMax(0.0);
  result.status = SqpStatus::converged;
  return result;
}

SqpSolveResult solve_nlp(const NlpProblem& nlp, const KktPoint& init, double tol,
                         int max_iter, const SqpOptions& options) {
  if (tol <= 0.0) throw std::invalid_argument("solve_nlp: tol must be positive");
  if (!init.primal.allFinite()) {
    throw std::invalid_argument("solve_nlp: initial primal not finite");
  }
  SqpSolveResult result;
  result.point = init;
  std::vector<int> active = options.warm_active ? *options.warm_active
                                                : std::vector<int>{};
  for (int iter = 0; iter <= max_iter; ++iter) {
    const double r = kkt_residual(nlp, result.point);
    result.report.residual_history.push_back(r);
    result.report.kkt_residual = r;
    if (r <= tol) {
      result.report.status = SqpStatus::converged;
      result.report.converged = true;
      result.report.iterations = iter;
      return result;
    }
    if (iter == max_iter) break;
    SqpOptions step_opts;
    step_opts.warm_active = &active;
    const SqpStepResult step = sqp_step(nlp, result.point, step_opts);
    if (step.status != SqpStatus::converged) {
      result.report.status = step.status;
      result.report.iterations = iter;
      return result;
    }
    active = step.qp_active_set;
    result.point = step.point;
    result.report.iterations = iter + 1;
  }
  result.report.status = SqpStatus::max_iter;
  return result;
}

}  // namespace carebot::nlp
