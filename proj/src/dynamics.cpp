#include "carebot/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace carebot::dyn {

double wrap_angle(double a) {
  const double two_pi = 2.0 * M_PI;
  a = std::fmod(a, two_pi);
  if (a <= -M_PI) a += two_pi;
  if (a > M_PI) a -= two_pi;
  return a;
}

Eigen::Vector4d residual_features(const ContinuousState& z, const Control& u) {
  return {z.speed * u.turn_rate, z.speed, u.turn_rate, 1.0};
}

Eigen::Vector4d step_smooth(const Eigen::Vector4d& z, const Eigen::Vector3d& u,
                            double h, const Eigen::Vector4d& w) {
  const double theta = z(2);
  const double v = z(3);
  const double prop = u(0);
  const double brake = u(1);
  const double omega = u(2);
  const double residual = w(0) * v * omega + w(1) * v + w(2) * omega + w(3);
  Eigen::Vector4d out;
  out(0) = z(0) + h * v * std::cos(theta);
  out(1) = z(1) + h * v * std::sin(theta);
  out(2) = theta + h * (omega + residual);
  out(3) = v + h * (prop - brake * v);
  return out;
}

ContinuousState step_true(const ContinuousState& z, const Control& u, double h,
                          double eps_gyro, double v_max) {
  if (h <= 0.0) throw std::invalid_argument("step_true: h must be positive");
  Eigen::Vector4d w(eps_gyro, 0.0, 0.0, 0.0);
  Eigen::Vector4d next = step_smooth(z.vec(), u.vec(), h, w);
  next(2) = wrap_angle(next(2));
  next(3) = std::clamp(next(3), 0.0, v_max);
  return ContinuousState::from_vec(next);
}

ContinuousState step_nominal(const GreyBoxModel& model, const ContinuousState& z,
                             const Control& u, double h) {
  if (h <= 0.0) throw std::invalid_argument("step_nominal: h must be positive");
  Eigen::Vector4d next = step_smooth(z.vec(), u.vec(), h, model.residual_weights);
  next(2) = wrap_angle(next(2));
  next(3) = std::clamp(next(3), 0.0, model.v_max);
  return ContinuousState::from_vec(next);
}

void step_jacobians(const Eigen::Vector4d& z, const Eigen::Vector3d& u, double h,
                    const Eigen::Vector4d& w, Eigen::Matrix4d& d_dz,
                    Eigen::Matrix<double, 4, 3>& d_du) {
  const double theta = z(2);
  const double v = z(3);
  const double brake = u(1);
  const double omega = u(2);
  d_dz.setIdentity();
  d_dz(0, 2) = -h * v * std::sin(theta);
  d_dz(0, 3) = h * std::cos(theta);
  d_dz(1, 2) = h * v * std::cos(theta);
  d_dz(1, 3) = h * std::sin(theta);
  d_dz(2, 3) = h * (w(0) * omega + w(1));
  d_dz(3, 3) = 1.0 - h * brake;

  d_du.setZero();
  d_du(2, 2) = h * (1.0 + w(0) * v + w(2));
  d_du(3, 0) = h;
  d_du(3, 1) = -h * v;
}

Eigen::Matrix<double, 7, 7> step_hessian_contraction(
    const Eigen::Vector4d& z, const Eigen::Vector3d& u, double h,
    const Eigen::Vector4d& w, const Eigen::Vector4d& lambda) {
  // Stacked variable order: (px, py, theta, v, prop, brake, omega).
  const double theta = z(2);
  const double v = z(3);
  Eigen::Matrix<double, 7, 7> hess = Eigen::Matrix<double, 7, 7>::Zero();

  // Row 0: px' = px + h v cos(theta).
  hess(2, 2) += lambda(0) * (-h * v * std::cos(theta));
  hess(2, 3) += lambda(0) * (-h * std::sin(theta));
  hess(3, 2) += lambda(0) * (-h * std::sin(theta));
  // Row 1: py' = py + h v sin(theta).
  hess(2, 2) += lambda(1) * (-h * v * std::sin(theta));
  hess(2, 3) += lambda(1) * (h * std::cos(theta));
  hess(3, 2) += lambda(1) * (h * std::cos(theta));
  // Row 2: theta' couples v and omega through the bilinear residual term.
  hess(3, 6) += lambda(2) * h * w(0);
  hess(6, 3) += lambda(2) * h * w(0);
  // Row 3: v' = v + h (prop - brake v).
  hess(3, 5) += lambda(3) * (-h);
  hess(5, 3) += lambda(3) * (-h);
  return hess;
}

double collision_clearance(const ContinuousState& z,
                           const std::vector<Obstacle>& obstacles,
                           double robot_radius) {
  double best = kNoObstacleClearance;
  for (const Obstacle& o : obstacles) {
    const double dx = z.px - o.cx;
    const double dy = z.py - o.cy;
    const double d = std::sqrt(dx * dx + dy * dy) - o.radius - robot_radius;
    best = std::min(best, d);
  }
  return best;
}

RegressionResult residual_regress(const std::vector<RegressionSample>& samples) {
  if (samples.size() < 4) {
    throw std::invalid_argument("residual_regress: need at least 4 samples");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd features(n, 4);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const RegressionSample& s = samples[static_cast<std::size_t>(i)];
    features.row(i) = s.step_length * residual_features(s.z, s.u).transpose();
    target(i) = s.observed_heading_increment - s.step_length * s.u.turn_rate;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(features);
  RegressionResult result;
  result.weights = cod.solve(target);
  result.rank_deficient = cod.rank() < 4;
  result.residual_rms =
      std::sqrt((features * result.weights - target).squaredNorm() /
                static_cast<double>(n));
  return result;
}

}  // namespace carebot::dyn
