#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "carebot/qp.hpp"

namespace carebot::nlp {

/// Smooth nonlinear program
///
///   min_w  cost(w)
///   s.t.   eq(w)   = 0
///          ineq(w) <= 0
///
/// Any initial-state dependence is baked into the callables by the builder.
/// `lagrangian_hessian` is optional; when absent it is approximated by
/// central differences of the Lagrangian gradient (fine for small fixtures,
/// trajectory problems supply the analytic one).
struct NlpProblem {
  int dim = 0;
  int eq_dim = 0;
  int ineq_dim = 0;
  std::function<double(const Eigen::VectorXd&)> cost;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> cost_grad;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eq;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> eq_jac;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> ineq;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> ineq_jac;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      lagrangian_hessian;
};

struct KktPoint {
  Eigen::VectorXd primal;
  Eigen::VectorXd eq_duals;
  Eigen::VectorXd ineq_duals;

  static KktPoint zero(const NlpProblem& nlp) {
    KktPoint p;
    p.primal = Eigen::VectorXd::Zero(nlp.dim);
    p.eq_duals = Eigen::VectorXd::Zero(nlp.eq_dim);
    p.ineq_duals = Eigen::VectorXd::Zero(nlp.ineq_dim);
    return p;
  }
};

enum class SqpStatus { converged, max_iter, line_search_failure, qp_infeasible };

struct SqpReport {
  SqpStatus status = SqpStatus::max_iter;
  bool converged = false;
  int iterations = 0;
  double kkt_residual = 0.0;
  std::vector<double> residual_history;
};

struct SqpStepResult {
  KktPoint point;
  double alpha = 0.0;
  double step_norm = 0.0;
  SqpStatus status = SqpStatus::converged;
  std::vector<int> qp_active_set;
};

struct SqpOptions {
  const std::vector<int>* warm_active = nullptr;
};

/// Max-norm residual of the first-order optimality system: stationarity of
/// the Lagrangian, primal feasibility, dual feasibility, complementarity.
double kkt_residual(const NlpProblem& nlp, const KktPoint& point);

/// One SQP iteration: local QP at the point, primal-dual step with an
/// l1-merit backtracking line search.
SqpStepResult sqp_step(const NlpProblem& nlp, const KktPoint& point,
                       const SqpOptions& options = {});

/// Full SQP loop to the requested KKT tolerance.
struct SqpSolveResult {
  KktPoint point;
  SqpReport report;
};
SqpSolveResult solve_nlp(const NlpProblem& nlp, const KktPoint& init, double tol,
                         int max_iter, const SqpOptions& options = {});

}  // namespace carebot::nlp
