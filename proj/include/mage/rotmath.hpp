#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mage {

// 3x3 rotation matrix, orthonormal with determinant +1.
using RotM = Eigen::Matrix3d;

// 6D rotation encoding: the first two columns of a rotation matrix,
// column-major (a[0..2] = column 0, a[3..5] = column 1).
using Rot6 = Eigen::Matrix<double, 6, 1>;

using Vec3 = Eigen::Vector3d;

// True when M has orthonormal columns and det +1 within tol.
bool is_valid_rotation(const RotM& m, double tol = 1e-6);

RotM axis_angle(const Vec3& axis, double angle_rad);

Rot6 sixd_encode(const RotM& r);

// Gram-Schmidt decode. Throws DegenerateInput when the first 3-vector is
// near zero or the second is parallel to the first.
RotM sixd_decode(const Rot6& a);

// Relative rotation R_prev^T * R_cur (one-frame angular step).
RotM angular_velocity(const RotM& r_prev, const RotM& r_cur);

inline Vec3 linear_velocity(const Vec3& p_prev, const Vec3& p_cur) { return p_cur - p_prev; }

// Geodesic distance on SO(3) in degrees, in [0, 180].
double geodesic_angle_deg(const RotM& r1, const RotM& r2);

// Chordal (Frobenius) mean: arithmetic mean projected to the nearest
// rotation by polar decomposition. Throws DegenerateInput on an empty list
// or a rank-deficient mean.
RotM chordal_mean(const std::vector<RotM>& rs);
RotM chordal_mean(const std::vector<RotM>& rs, const std::vector<double>& weights);

}  // namespace mage
