#pragma once

#include <Eigen/Dense>

namespace stewart_cbf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr int kDof = 6;

// Generalized coordinate indices, q = [X, Y, Z, phi, theta, psi].
enum Axis : int { kX = 0, kY = 1, kZ = 2, kRoll = 3, kPitch = 4, kYaw = 5 };

inline constexpr const char* kAxisNames[kDof] = {"X", "Y", "Z", "phi", "theta", "psi"};

}  // namespace stewart_cbf
