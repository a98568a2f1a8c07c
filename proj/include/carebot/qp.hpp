#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

namespace carebot::qp {

/// Convex quadratic program
///
///   min_x  1/2 x' H x + g' x
///   s.t.   A_eq x  = b_eq
///          A_in x <= b_in
///
/// H must be symmetric; it is regularized to be positive definite before
/// solving (minimum eigenvalue lifted to 1e-8), so indefinite SQP Lagrangian
/// Hessians are accepted.
template <typename Scalar>
struct QpProblem {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Mat hessian;      // n x n
  Vec gradient;     // n
  Mat eq_matrix;    // p x n
  Vec eq_rhs;       // p
  Mat ineq_matrix;  // m x n
  Vec ineq_rhs;     // m

  Eigen::Index dim() const { return gradient.size(); }
  Eigen::Index num_eq() const { return eq_rhs.size(); }
  Eigen::Index num_ineq() const { return ineq_rhs.size(); }

  static QpProblem unconstrained(Mat H, Vec g) {
    QpProblem p;
    const Eigen::Index n = g.size();
    p.hessian = std::move(H);
    p.gradient = std::move(g);
    p.eq_matrix.resize(0, n);
    p.eq_rhs.resize(0);
    p.ineq_matrix.resize(0, n);
    p.ineq_rhs.resize(0);
    return p;
  }
};

enum class QpStatus { optimal, infeasible, max_iter };

template <typename Scalar>
struct QpSolution {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vec primal;
  Vec eq_duals;
  Vec ineq_duals;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  std::vector<int> active_set;  // inequality indices active at exit
};

struct QpOptions {
  int max_iter = 0;  // 0: choose from problem size
  const std::vector<int>* warm_active = nullptr;
};

namespace detail {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Primal active-set loop. Requires x0 feasible (to feas_tol) and H positive
// definite. Ties in the blocking/leaving choices are broken by lowest
// constraint index (Bland), which rules out cycling.
template <typename Scalar>
QpSolution<Scalar> active_set_solve(const QpProblem<Scalar>& qp,
                                    Vec<Scalar> x,
                                    std::vector<int> working,
                                    Scalar tol,
                                    int max_iter) {
  const Eigen::Index n = qp.dim();
  const Eigen::Index p = qp.num_eq();
  const Eigen::Index m = qp.num_ineq();
  const Scalar step_tol = Scalar(1e-12);

  QpSolution<Scalar> sol;
  sol.primal = x;
  sol.eq_duals = Vec<Scalar>::Zero(p);
  sol.ineq_duals = Vec<Scalar>::Zero(m);

  std::vector<char> in_working(static_cast<std::size_t>(m), 0);
  for (int i : working) in_working[static_cast<std::size_t>(i)] = 1;

  for (int iter = 0; iter < max_iter; ++iter) {
    sol.iterations = iter + 1;
    const Eigen::Index k = static_cast<Eigen::Index>(working.size());

    // Stack equality rows and working inequality rows.
    Mat<Scalar> a_work(p + k, n);
    if (p > 0) a_work.topRows(p) = qp.eq_matrix;
    for (Eigen::Index j = 0; j < k; ++j)
      a_work.row(p + j) = qp.ineq_matrix.row(working[static_cast<std::size_t>(j)]);

    const Vec<Scalar> grad_x = qp.hessian * x + qp.gradient;

    // Step direction in the null space of the working constraints.
    Vec<Scalar> d = Vec<Scalar>::Zero(n);
    Eigen::Index null_dim = n;
    Eigen::ColPivHouseholderQR<Mat<Scalar>> qr;
    if (p + k > 0) {
      qr.compute(a_work.transpose());
      const Eigen::Index rank = qr.rank();
      null_dim = n - rank;
      if (null_dim > 0) {
        Mat<Scalar> q_full = qr.householderQ();
        Mat<Scalar> z = q_full.rightCols(null_dim);
        Mat<Scalar> h_red = z.transpose() * qp.hessian * z;
        Vec<Scalar> rhs = -(z.transpose() * grad_x);
        Vec<Scalar> xi = h_red.llt().solve(rhs);
        d = z * xi;
      }
    } else {
      d = qp.hessian.llt().solve(-grad_x);
    }

    const Scalar d_norm = d.template lpNorm<Eigen::Infinity>();
    if (d_norm <= step_tol * (Scalar(1) + x.template lpNorm<Eigen::Infinity>())) {
      // Stationary on the working set: recover multipliers.
      Vec<Scalar> y = Vec<Scalar>::Zero(p + k);
      if (p + k > 0) y = qr.solve(-grad_x);
      int leave = -1;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (y(p + j) < -tol) {  // Bland: lowest index leaves
          const int idx = working[static_cast<std::size_t>(j)];
          if (leave < 0 || idx < working[static_cast<std::size_t>(leave)]) {
            leave = static_cast<int>(j);
          }
        }
      }
      if (leave < 0) {
        sol.primal = x;
        if (p > 0) sol.eq_duals = y.head(p);
        for (Eigen::Index j = 0; j < k; ++j) {
          sol.ineq_duals(working[static_cast<std::size_t>(j)]) =
              std::max(Scalar(0), y(p + j));
        }
        sol.status = QpStatus::optimal;
        sol.active_set = working;
        std::sort(sol.active_set.begin(), sol.active_set.end());
        return sol;
      }
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(leave)])] = 0;
      working.erase(working.begin() + leave);
      continue;
    }

    // Ratio test against constraints not in the working set.
    Scalar alpha = Scalar(1);
    int block = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      const Scalar adi = qp.ineq_matrix.row(i).dot(d);
      if (adi <= step_tol) continue;
      const Scalar slack = qp.ineq_rhs(i) - qp.ineq_matrix.row(i).dot(x);
      const Scalar ratio = std::max(Scalar(0), slack) / adi;
      if (ratio < alpha - step_tol || (ratio < alpha + step_tol && block >= 0 &&
                                       static_cast<int>(i) < block)) {
        alpha = std::min(alpha, ratio);
        block = static_cast<int>(i);
      }
    }

    x += alpha * d;
    if (block >= 0 && alpha < Scalar(1) - step_tol) {
      working.push_back(block);
      in_working[static_cast<std::size_t>(block)] = 1;
    }
  }

  sol.primal = x;
  sol.status = QpStatus::max_iter;
  sol.active_set = working;
  std::sort(sol.active_set.begin(), sol.active_set.end());
  return sol;
}

template <typename Scalar>
void regularize_hessian(Mat<Scalar>& h) {
  const Scalar sym_tol = Scalar(1e-12);
  const Scalar asym = (h - h.transpose()).template lpNorm<Eigen::Infinity>();
  if (asym > sym_tol * std::max(Scalar(1), h.template lpNorm<Eigen::Infinity>())) {
    throw std::invalid_argument("qp: hessian is not symmetric");
  }
  h = ((h + h.transpose()) / Scalar(2)).eval();
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(h, Eigen::EigenvaluesOnly);
  const Scalar lambda_min = es.eigenvalues().minCoeff();
  const Scalar floor = Scalar(1e-8);
  if (lambda_min < floor) {
    h += (floor - lambda_min) * Mat<Scalar>::Identity(h.rows(), h.cols());
  }
}

}  // namespace detail

/// Max-norm KKT residual of a candidate solution: stationarity, primal
/// feasibility (both constraint kinds), dual feasibility, complementarity.
/// Zero for an exact optimum.
template <typename Scalar>
Scalar kkt_residual(const QpProblem<Scalar>& qp, const QpSolution<Scalar>& sol) {
  if (sol.primal.size() != qp.dim() || sol.eq_duals.size() != qp.num_eq() ||
      sol.ineq_duals.size() != qp.num_ineq()) {
    throw std::invalid_argument("qp: kkt_residual dimension mismatch");
  }
  using Vec = detail::Vec<Scalar>;
  Scalar r = Scalar(0);

  Vec stat = qp.hessian * sol.primal + qp.gradient;
  if (qp.num_eq() > 0) stat += qp.eq_matrix.transpose() * sol.eq_duals;
  if (qp.num_ineq() > 0) stat += qp.ineq_matrix.transpose() * sol.ineq_duals;
  r = std::max(r, stat.template lpNorm<Eigen::Infinity>());

  if (qp.num_eq() > 0) {
    r = std::max(r, (qp.eq_matrix * sol.primal - qp.eq_rhs)
                        .template lpNorm<Eigen::Infinity>());
  }
  for (Eigen::Index i = 0; i < qp.num_ineq(); ++i) {
    const Scalar slack = qp.ineq_matrix.row(i).dot(sol.primal) - qp.ineq_rhs(i);
    r = std::max(r, slack);                             // primal feasibility
    r = std::max(r, -sol.ineq_duals(i));                // dual feasibility
    r = std::max(r, std::abs(sol.ineq_duals(i) * slack));  // complementarity
  }
  return r;
}

/// Solves the QP with a primal active-set method (lowest-index anti-cycling).
/// The returned status is `optimal` only if the KKT residual is within tol.
template <typename Scalar>
QpSolution<Scalar> solve_qp(QpProblem<Scalar> qp, Scalar tol,
                            const QpOptions& options = {}) {
  using Mat = detail::Mat<Scalar>;
  using Vec = detail::Vec<Scalar>;
  const Eigen::Index n = qp.dim();
  const Eigen::Index p = qp.num_eq();
  const Eigen::Index m = qp.num_ineq();
  if (tol <= Scalar(0)) throw std::invalid_argument("qp: tol must be positive");
  if (p > n) throw std::invalid_argument("qp: more equalities than variables");

  detail::regularize_hessian(qp.hessian);

  const Scalar feas_tol = Scalar(1e-9);
  const int max_iter =
      options.max_iter > 0 ? options.max_iter
                           : 50 * static_cast<int>(n + m + 10);

  // Point satisfying the equality constraints (minimum norm).
  Vec x0 = Vec::Zero(n);
  if (p > 0) {
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(qp.eq_matrix);
    x0 = cod.solve(qp.eq_rhs);
    const Scalar res = (qp.eq_matrix * x0 - qp.eq_rhs).template lpNorm<Eigen::Infinity>();
    if (res > feas_tol * (Scalar(1) + qp.eq_rhs.template lpNorm<Eigen::Infinity>())) {
      QpSolution<Scalar> sol;
      sol.primal = x0;
      sol.eq_duals = Vec::Zero(p);
      sol.ineq_duals = Vec::Zero(m);
      sol.status = QpStatus::infeasible;
      return sol;
    }
  }

  // Optional warm start: project x0 onto the previously active rows and keep
  // them in the working set if the projection stays feasible.
  std::vector<int> working;
  if (options.warm_active != nullptr && !options.warm_active->empty() && m > 0) {
    std::vector<int> rows;
    for (int i : *options.warm_active) {
      if (i >= 0 && i < static_cast<int>(m)) rows.push_back(i);
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    if (!rows.empty()) {
      Mat a_try(p + static_cast<Eigen::Index>(rows.size()), n);
      Vec b_try(a_try.rows());
      if (p > 0) {
        a_try.topRows(p) = qp.eq_matrix;
        b_try.head(p) = qp.eq_rhs;
      }
      for (std::size_t j = 0; j < rows.size(); ++j) {
        a_try.row(p + static_cast<Eigen::Index>(j)) = qp.ineq_matrix.row(rows[j]);
        b_try(p + static_cast<Eigen::Index>(j)) = qp.ineq_rhs(rows[j]);
      }
      Eigen::CompleteOrthogonalDecomposition<Mat> cod(a_try);
      if (cod.rank() == a_try.rows()) {
        Vec x_try = cod.solve(b_try);
        const Scalar eq_res =
            p > 0 ? (qp.eq_matrix * x_try - qp.eq_rhs).template lpNorm<Eigen::Infinity>()
                  : Scalar(0);
        bool ok = eq_res <= feas_tol;
        if (ok && m > 0) {
          ok = ((qp.ineq_matrix * x_try - qp.ineq_rhs).maxCoeff() <= feas_tol);
        }
        if (ok) {
          x0 = x_try;
          working = rows;
        }
      }
    }
  }

  // Phase 1 when the equality point violates inequalities: minimize elastic
  // slacks s >= violation with a tiny quadratic tie-breaker.
  if (working.empty() && m > 0) {
    const Scalar viol = (qp.ineq_matrix * x0 - qp.ineq_rhs).maxCoeff();
    if (viol > feas_tol) {
      const Scalar eps = Scalar(1e-6);
      QpProblem<Scalar> ph;
      ph.hessian = eps * Mat::Identity(n + m, n + m);
      ph.gradient = Vec::Zero(n + m);
      ph.gradient.head(n) = -eps * x0;
      ph.gradient.tail(m).setOnes();
      ph.eq_matrix = Mat::Zero(p, n + m);
      if (p > 0) ph.eq_matrix.leftCols(n) = qp.eq_matrix;
      ph.eq_rhs = qp.eq_rhs;
      ph.ineq_matrix = Mat::Zero(2 * m, n + m);
      ph.ineq_matrix.topLeftCorner(m, n) = qp.ineq_matrix;
      ph.ineq_matrix.topRightCorner(m, m) = -Mat::Identity(m, m);
      ph.ineq_matrix.bottomRightCorner(m, m) = -Mat::Identity(m, m);
      ph.ineq_rhs = Vec::Zero(2 * m);
      ph.ineq_rhs.head(m) = qp.ineq_rhs;

      Vec z0 = Vec::Zero(n + m);
      z0.head(n) = x0;
      z0.tail(m) = (qp.ineq_matrix * x0 - qp.ineq_rhs).cwiseMax(Scalar(0));
      QpSolution<Scalar> ph_sol = detail::active_set_solve<Scalar>(
          ph, z0, {}, tol, 50 * static_cast<int>(n + 3 * m + 10));
      const Scalar worst = ph_sol.primal.tail(m).maxCoeff();
      if (ph_sol.status != QpStatus::optimal ||
          worst > Scalar(1e-7) * (Scalar(1) +
                                  qp.ineq_rhs.template lpNorm<Eigen::Infinity>())) {
        QpSolution<Scalar> sol;
        sol.primal = ph_sol.primal.head(n);
        sol.eq_duals = Vec::Zero(p);
        sol.ineq_duals = Vec::Zero(m);
        sol.status = QpStatus::infeasible;
        sol.iterations = ph_sol.iterations;
        return sol;
      }
      x0 = ph_sol.primal.head(n);
    }
  }

  QpSolution<Scalar> sol =
      detail::active_set_solve<Scalar>(qp, x0, working, tol, max_iter);
  if (sol.status == QpStatus::optimal && kkt_residual(qp, sol) > tol) {
    sol.status = QpStatus::max_iter;
  }
  return sol;
}

using QpProblemd = QpProblem<double>;
using QpSolutiond = QpSolution<double>;

}  // namespace carebot::qp
