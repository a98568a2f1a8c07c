#pragma once

#include <Eigen/Dense>

#include <vector>

namespace carebot::dyn {

/// Planar pose plus forward speed. Heading is kept in (-pi, pi].
struct ContinuousState {
  double px = 0.0;
  double py = 0.0;
  double heading = 0.0;
  double speed = 0.0;

  Eigen::Vector4d vec() const { return {px, py, heading, speed}; }
  static ContinuousState from_vec(const Eigen::Vector4d& v) {
    return {v(0), v(1), v(2), v(3)};
  }
  Eigen::Vector2d position() const { return {px, py}; }
};

/// Actuation: nonnegative propulsion (m/s^2), nonnegative brake coefficient
/// (1/s, speed-proportional decay) and signed turn rate (rad/s).
struct Control {
  double propulsion = 0.0;
  double brake = 0.0;
  double turn_rate = 0.0;

  Eigen::Vector3d vec() const { return {propulsion, brake, turn_rate}; }
  static Control from_vec(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

struct Obstacle {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

/// Grey-box dynamics: unicycle step known exactly, heading residual modeled
/// as theta_f' * phi(z, u) on a fixed basis phi = (v*omega, v, omega, 1).
struct GreyBoxModel {
  Eigen::Vector4d residual_weights = Eigen::Vector4d::Zero();
  double v_max = 10.0;
};

constexpr double kNoObstacleClearance = 1e9;

double wrap_angle(double a);

Eigen::Vector4d residual_features(const ContinuousState& z, const Control& u);

/// Plant step: Euler integration of the unicycle with the hidden gyroscopic
/// coupling eps * v * omega on the heading channel. Heading wrapped, speed
/// clipped to [0, v_max].
ContinuousState step_true(const ContinuousState& z, const Control& u, double h,
                          double eps_gyro, double v_max);

/// Model step used by the controller; residual term in place of the true
/// gyroscopic coupling. Equal to step_true when residual_weights encode it.
ContinuousState step_nominal(const GreyBoxModel& model, const ContinuousState& z,
                             const Control& u, double h);

/// Unclipped, unwrapped Euler step of the model; the smooth map the OCP and
/// its derivatives are built on.
Eigen::Vector4d step_smooth(const Eigen::Vector4d& z, const Eigen::Vector3d& u,
                            double h, const Eigen::Vector4d& residual_weights);

/// Analytic Jacobians of step_smooth.
void step_jacobians(const Eigen::Vector4d& z, const Eigen::Vector3d& u, double h,
                    const Eigen::Vector4d& residual_weights,
                    Eigen::Matrix4d& d_dz, Eigen::Matrix<double, 4, 3>& d_du);

/// Hessian of lambda' * step_smooth with respect to the stacked (z, u)
/// 7-vector; used to assemble SQP Lagrangian Hessians.
Eigen::Matrix<double, 7, 7> step_hessian_contraction(
    const Eigen::Vector4d& z, const Eigen::Vector3d& u, double h,
    const Eigen::Vector4d& residual_weights, const Eigen::Vector4d& lambda);

/// Min over obstacles of (center distance - obstacle radius - robot radius);
/// positive means collision-free, kNoObstacleClearance if there are none.
double collision_clearance(const ContinuousState& z,
                           const std::vector<Obstacle>& obstacles,
                           double robot_radius);

struct RegressionSample {
  ContinuousState z;
  Control u;
  double observed_heading_increment = 0.0;
  double step_length = 0.0;
};

struct RegressionResult {
  Eigen::Vector4d weights = Eigen::Vector4d::Zero();
  double residual_rms = 0.0;
  bool rank_deficient = false;
};

/// Least-squares fit of the heading-increment residual (observed minus the
/// known h*omega part) onto the feature basis. Rank-deficient feature
/// matrices yield the minimum-norm solution, flagged.
RegressionResult residual_regress(const std::vector<RegressionSample>& samples);

}  // namespace carebot::dyn
