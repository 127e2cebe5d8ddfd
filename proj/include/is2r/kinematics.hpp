#pragma once

// Simplified 8-DOF robot: a two-axis gantry carrying a six-joint arm that
// ends at the paddle centre.
//
//   q0  prismatic, world x           (gantry lateral)
//   q1  prismatic, world y           (gantry depth)
//   q2  revolute, z  (base yaw)      link (0, 0, 0.29)
//   q3  revolute, x  (shoulder)      link (0, 0, 0.27)
//   q4  revolute, x  (elbow)         link (0, 0.30, 0)
//   q5  revolute, y  (forearm roll)  link (0, 0.07, 0)
//   q6  revolute, x  (wrist pitch)   link (0, 0.17, 0)
//   q7  revolute, z  (wrist yaw)     link (0, 0.05, 0) to the paddle centre
//
// The paddle normal is local +y tilted up by `paddle_tilt`. With all joints
// zero the arm base sits at (0, -2.4, -0.3) and the paddle centre at
// (0, -1.81, 0.26).

#include <array>
#include <cmath>

#include <Eigen/Geometry>

#include "is2r/common.hpp"
#include "is2r/policy.hpp"

namespace is2r {

struct RobotGeometry {
  Vec3 base_offset{0.0, -2.4, -0.3};
  std::array<Vec3, 6> links = {Vec3{0, 0, 0.29}, Vec3{0, 0, 0.27}, Vec3{0, 0.30, 0},
                               Vec3{0, 0.07, 0}, Vec3{0, 0.17, 0}, Vec3{0, 0.05, 0}};
  std::array<Vec3, 6> axes = {Vec3::UnitZ(), Vec3::UnitX(), Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitX(), Vec3::UnitZ()};
  double paddle_tilt = 0.26;  // rad
  JointVector lower = {-1.0, -0.25, -1.5, -1.5, -1.5, -3.14159, -1.5, -1.5};
  JointVector upper = {1.0, 0.25, 1.5, 1.5, 1.5, 3.14159, 1.5, 1.5};
  JointVector home = {0.35, -0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};

  void validate() const {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      if (!(lower[j] < upper[j])) throw ValidationError("joint limits must satisfy lower < upper");
      if (home[j] < lower[j] || home[j] > upper[j]) throw ValidationError("home pose outside joint limits");
    }
  }

  JointVector clamp(const JointVector& q) const {
    JointVector out;
    for (std::size_t j = 0; j < kNumJoints; ++j) out[j] = std::clamp(q[j], lower[j], upper[j]);
    return out;
  }
};

struct KinematicState {
  PaddlePose paddle;
  Vec3 shoulder = Vec3::Zero();                 // origin of the shoulder joint
  std::array<Vec3, 6> joint_origins;            // revolute joint origins, world
  std::array<Vec3, 6> joint_axes;               // revolute joint axes, world
};

inline KinematicState forward_kinematics(const RobotGeometry& g, const JointVector& q) {
  KinematicState ks;
  Vec3 p = g.base_offset + Vec3{q[0], q[1], 0.0};
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  for (std::size_t i = 0; i < 6; ++i) {
    const Vec3 axis = r * g.axes[i];
    ks.joint_origins[i] = p;
    ks.joint_axes[i] = axis;
    r = r * Eigen::AngleAxisd(q[2 + i], g.axes[i]).toRotationMatrix();
    p += r * g.links[i];
  }
  ks.shoulder = ks.joint_origins[1];
  ks.paddle.position = p;
  ks.paddle.normal = (r * Vec3{0.0, std::cos(g.paddle_tilt), std::sin(g.paddle_tilt)}).normalized();
  return ks;
}

// Linear (rows 0-2) and angular (rows 3-5) velocity Jacobian of the paddle centre.
inline Eigen::Matrix<double, 6, 8> paddle_jacobian(const RobotGeometry& g, const JointVector& q) {
  const KinematicState ks = forward_kinematics(g, q);
  Eigen::Matrix<double, 6, 8> j = Eigen::Matrix<double, 6, 8>::Zero();
  j.block<3, 1>(0, 0) = Vec3::UnitX();
  j.block<3, 1>(0, 1) = Vec3::UnitY();
  for (std::size_t i = 0; i < 6; ++i) {
    const Vec3& a = ks.joint_axes[i];
    j.block<3, 1>(0, 2 + i) = a.cross(ks.paddle.position - ks.joint_origins[i]);
    j.block<3, 1>(3, 2 + i) = a;
  }
  return j;
}

struct PaddleMotion {
  PaddlePose pose;
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
};

inline PaddleMotion paddle_motion(const RobotGeometry& g, const JointVector& q, const JointVector& qd) {
  PaddleMotion m;
  m.pose = forward_kinematics(g, q).paddle;
  Eigen::Matrix<double, 8, 1> v;
  for (std::size_t i = 0; i < kNumJoints; ++i) v[i] = qd[i];
  const Eigen::Matrix<double, 6, 1> twist = paddle_jacobian(g, q) * v;
  m.velocity = twist.head<3>();
  m.angular_velocity = twist.tail<3>();
  return m;
}

}  // namespace is2r
