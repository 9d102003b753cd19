#include "mage/rotmath.hpp"

#include <algorithm>
#include <cmath>

#include "mage/errors.hpp"

namespace mage {

bool is_valid_rotation(const RotM& m, double tol) {
    const RotM gram = m.transpose() * m;
    if ((gram - RotM::Identity()).cwiseAbs().maxCoeff() >= tol) return false;
    return std::abs(m.determinant() - 1.0) < tol;
}

RotM axis_angle(const Vec3& axis, double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

Rot6 sixd_encode(const RotM& r) {
    Rot6 a;
    a.segment<3>(0) = r.col(0);
    a.segment<3>(3) = r.col(1);
    return a;
}

RotM sixd_decode(const Rot6& a) {
    const Vec3 a1 = a.segment<3>(0);
    const Vec3 a2 = a.segment<3>(3);
    const double n1 = a1.norm();
    if (n1 <= 1e-12) throw DegenerateInput("sixd_decode: first column near zero");
    const Vec3 b1 = a1 / n1;
    const Vec3 ortho = a2 - b1.dot(a2) * b1;
    const double n2 = ortho.norm();
    if (n2 <= 1e-12) throw DegenerateInput("sixd_decode: columns parallel");
    const Vec3 b2 = ortho / n2;
    RotM r;
    r.col(0) = b1;
    r.col(1) = b2;
    r.col(2) = b1.cross(b2);
    return r;
}

RotM angular_velocity(const RotM& r_prev, const RotM& r_cur) {
    return r_prev.transpose() * r_cur;
}

double geodesic_angle_deg(const RotM& r1, const RotM& r2) {
    const double cos_angle = std::clamp(((r1.transpose() * r2).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(cos_angle) * 180.0 / M_PI;
}

namespace {

RotM polar_project(const RotM& m) {
    Eigen::JacobiSVD<RotM> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(2) <= 1e-9 * std::max(1.0, svd.singularValues()(0)))
        throw DegenerateInput("chordal_mean: rank-deficient mean matrix");
    RotM r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return r;
}

}  // namespace

RotM chordal_mean(const std::vector<RotM>& rs) {
    return chordal_mean(rs, std::vector<double>(rs.size(), 1.0));
}

RotM chordal_mean(const std::vector<RotM>& rs, const std::vector<double>& weights) {
    if (rs.empty()) throw DegenerateInput("chordal_mean: empty list");
    if (rs.size() != weights.size()) throw DegenerateInput("chordal_mean: weight count mismatch");
    RotM sum = RotM::Zero();
    double total = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        sum += weights[i] * rs[i];
        total += weights[i];
    }
    if (total <= 0.0) throw DegenerateInput("chordal_mean: non-positive total weight");
    return polar_project(sum / total);
}

}  // namespace mage
