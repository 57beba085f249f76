#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "cyclight/error.hpp"
#include "cyclight/signal.hpp"

namespace cyclight {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

struct CameraIntrinsics {
    double fx = 1, fy = 1;
    double cx = 0, cy = 0;
    int rows = 0, cols = 0;
};

inline void validate(const CameraIntrinsics& k) {
    if (!(k.fx > 0) || !(k.fy > 0)) throw OutOfRangeError("focal lengths must be positive");
}

/// World to camera: X_cam = R X_world + t.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
    Vec3 cameraCenter() const { return -rotation.transpose() * translation; }
};

inline Pixel project(const CameraIntrinsics& k, const Pose& pose, const Vec3& world) {
    const Vec3 c = pose.apply(world);
    if (!(c.z() > 0)) throw OutOfRangeError("point has nonpositive depth");
    return {k.fy * c.y() / c.z() + k.cy, k.fx * c.x() / c.z() + k.cx};
}

inline bool inImage(const CameraIntrinsics& k, const Pixel& p) {
    return p.row >= 0 && p.col >= 0 && p.row <= k.rows - 1 && p.col <= k.cols - 1;
}

inline bool isCoplanar(std::span<const Vec3> points) {
    if (points.size() < 4) throw InsufficientDataError("isCoplanar needs at least 4 points");
    Vec3 mean = Vec3::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Eigen::MatrixXd centered(points.size(), 3);
    for (std::size_t i = 0; i < points.size(); ++i) centered.row(static_cast<Eigen::Index>(i)) = (points[i] - mean).transpose();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const auto s = svd.singularValues();
    return s(2) < 1e-9 * s(0);
}

struct Correspondence {
    Vec3 world;
    Pixel pixel;
};

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

inline Mat3 expMap(const Vec3& w) {
    const double angle = w.norm();
    if (angle < 1e-300) return Mat3::Identity();
    return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

/// Nearest rotation in the Frobenius sense.
inline Mat3 orthonormalize(const Mat3& m) {
    const Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1 : 1;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Sum of squared pixel residuals.
inline double reprojectionCost(const CameraIntrinsics& k, const Pose& pose, std::span<const Correspondence> corr) {
    double cost = 0;
    for (const auto& c : corr) {
        const Vec3 x = pose.apply(c.world);
        const double dr = k.fy * x.y() / x.z() + k.cy - c.pixel.row;
        const double dc = k.fx * x.x() / x.z() + k.cx - c.pixel.col;
        cost += dr * dr + dc * dc;
    }
    return cost;
}

namespace detail {

struct Linearization {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 jtr = Vec6::Zero();
    double cost = 0;
};

// Parameters: left rotation increment w (R <- exp(w) R), then translation increment.
inline Linearization linearize(const CameraIntrinsics& k, const Pose& pose, std::span<const Correspondence> corr) {
    Linearization lin;
    for (const auto& c : corr) {
        const Vec3 y = pose.rotation * c.world;
        const Vec3 x = y + pose.translation;
        const double iz = 1.0 / x.z();
        Eigen::Matrix<double, 2, 3> dproj;
        dproj << 0, k.fy * iz, -k.fy * x.y() * iz * iz, k.fx * iz, 0, -k.fx * x.x() * iz * iz;
        Eigen::Matrix<double, 2, 6> j;
        j.leftCols<3>() = -dproj * skew(y);
        j.rightCols<3>() = dproj;
        const Eigen::Vector2d r(k.fy * x.y() * iz + k.cy - c.pixel.row, k.fx * x.x() * iz + k.cx - c.pixel.col);
        lin.jtj += j.transpose() * j;
        lin.jtr += j.transpose() * r;
        lin.cost += r.squaredNorm();
    }
    return lin;
}

inline Pose perturb(const Pose& pose, const Vec6& delta) {
    return Pose{orthonormalize(expMap(delta.head<3>()) * pose.rotation), pose.translation + delta.tail<3>()};
}

inline bool allInFront(const Pose& pose, std::span<const Correspondence> corr) {
    for (const auto& c : corr)
        if (!(pose.apply(c.world).z() > 0)) return false;
    return true;
}

struct Normalized {
    double x, y;
};

inline Normalized normalize(const CameraIntrinsics& k, const Pixel& p) { return {(p.col - k.cx) / k.fx, (p.row - k.cy) / k.fy}; }

/// Direct linear transform on normalized image coordinates.
inline Pose dltPose(const CameraIntrinsics& k, std::span<const Correspondence> corr) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& c : corr) centroid += c.world;
    centroid /= static_cast<double>(corr.size());
    double spread = 0;
    for (const auto& c : corr) spread += (c.world - centroid).norm();
    spread = spread / static_cast<double>(corr.size());
    if (!(spread > 0)) throw DegenerateConfigurationError("all points coincide");

    Eigen::MatrixXd a(2 * corr.size(), 12);
    a.setZero();
    for (std::size_t i = 0; i < corr.size(); ++i) {
        const Vec3 p = (corr[i].world - centroid) / spread;
        const auto n = normalize(k, corr[i].pixel);
        const Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
        const auto r0 = static_cast<Eigen::Index>(2 * i);
        a.block<1, 4>(r0, 0) = h.transpose();
        a.block<1, 4>(r0, 8) = -n.x * h.transpose();
        a.block<1, 4>(r0 + 1, 4) = h.transpose();
        a.block<1, 4>(r0 + 1, 8) = -n.y * h.transpose();
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::VectorXd v = svd.matrixV().col(11);
    Eigen::Matrix<double, 3, 4> p;
    p << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8), v(9), v(10), v(11);
    if (p.leftCols<3>().determinant() < 0) p = -p;
    const Eigen::JacobiSVD<Mat3> msvd(p.leftCols<3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double alpha = msvd.singularValues().mean();
    Pose pose;
    pose.rotation = orthonormalize(p.leftCols<3>());
    const double mu = alpha / spread;
    pose.translation = p.col(3) / mu - pose.rotation * centroid;
    return pose;
}

/// Best translation for a fixed rotation (linear in t).
inline Vec3 translationFor(const CameraIntrinsics& k, const Mat3& r, std::span<const Correspondence> corr) {
    Eigen::MatrixXd a(2 * corr.size(), 3);
    Eigen::VectorXd b(2 * corr.size());
    for (std::size_t i = 0; i < corr.size(); ++i) {
        const Vec3 y = r * corr[i].world;
        const auto n = normalize(k, corr[i].pixel);
        const auto r0 = static_cast<Eigen::Index>(2 * i);
        a.row(r0) << 1, 0, -n.x;
        b(r0) = n.x * y.z() - y.x();
        a.row(r0 + 1) << 0, 1, -n.y;
        b(r0 + 1) = n.y * y.z() - y.y();
    }
    return a.colPivHouseholderQr().solve(b);
}

/// Deterministic orientations spread over SO(3) (super-Fibonacci spiral).
inline std::vector<Mat3> rotationSeeds(int count) {
    constexpr double phi = std::numbers::sqrt2;
    constexpr double psi = 1.533751168755204288118041;
    std::vector<Mat3> out;
    for (int i = 0; i < count; ++i) {
        const double s = i + 0.5;
        const double r = std::sqrt(s / count), big = std::sqrt(1.0 - s / count);
        const double alpha = 2 * std::numbers::pi * s / phi, beta = 2 * std::numbers::pi * s / psi;
        const Eigen::Quaterniond q(big * std::cos(beta), r * std::sin(alpha), r * std::cos(alpha), big * std::sin(beta));
        out.push_back(q.normalized().toRotationMatrix());
    }
    return out;
}

}  // namespace detail

/// Gradient of reprojectionCost in the (rotation increment, translation) tangent space.
inline Vec6 reprojectionGradient(const CameraIntrinsics& k, const Pose& pose, std::span<const Correspondence> corr) {
    return 2.0 * detail::linearize(k, pose, corr).jtr;
}

struct RefineResult {
    Pose pose;
    double cost = 0;
    double gradientNorm = 0;
    int iterations = 0;
};

/// Levenberg-Marquardt on the reprojection cost. Stops when the gradient norm
/// drops below 1e-12 or no step lowers the cost any further.
inline RefineResult refinePose(const CameraIntrinsics& k, Pose pose, std::span<const Correspondence> corr,
                               int maxIterations = 200) {
    double lambda = 1e-3;
    auto lin = detail::linearize(k, pose, corr);
    RefineResult res;
    for (res.iterations = 0; res.iterations < maxIterations; ++res.iterations) {
        if ((2.0 * lin.jtr).norm() < 1e-12) break;
        bool improved = false;
        while (lambda < 1e12) {
            Eigen::Matrix<double, 6, 6> h = lin.jtj;
            h.diagonal() += lambda * (lin.jtj.diagonal().array() + 1e-12).matrix();
            const Vec6 delta = h.ldlt().solve(-lin.jtr);
            const Pose next = detail::perturb(pose, delta);
            if (detail::allInFront(next, corr)) {
                const double cost = reprojectionCost(k, next, corr);
                if (cost < lin.cost) {
                    pose = next;
                    lin = detail::linearize(k, pose, corr);
                    lambda = std::max(lambda * 0.1, 1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10;
        }
        if (!improved) break;
    }
    res.pose = pose;
    res.cost = lin.cost;
    res.gradientNorm = (2.0 * lin.jtr).norm();
    return res;
}

inline constexpr int kRotationSeeds = 16;

/// Camera pose from at least four non-coplanar world/pixel correspondences.
inline Pose solvePnP(const CameraIntrinsics& k, std::span<const Correspondence> corr) {
    validate(k);
    if (corr.size() < 4) throw InsufficientDataError("solvePnP needs at least 4 correspondences");
    std::vector<Vec3> world;
    for (const auto& c : corr) world.push_back(c.world);
    if (isCoplanar(world)) throw DegenerateConfigurationError("solvePnP: points are coplanar");

    std::vector<Pose> starts;
    if (corr.size() >= 6) {
        starts.push_back(detail::dltPose(k, corr));
    } else {
        for (const auto& r : detail::rotationSeeds(kRotationSeeds)) starts.push_back(Pose{r, detail::translationFor(k, r, corr)});
    }

    RefineResult best;
    best.cost = std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
        if (!detail::allInFront(start, corr)) continue;
        const auto res = refinePose(k, start, corr);
        if (res.cost < best.cost) best = res;
    }
    if (!std::isfinite(best.cost)) throw DegenerateConfigurationError("solvePnP: no initialization places the points in front");
    return best.pose;
}

/// Rotation angle of R_a^T R_b, in radians.
inline double rotationError(const Mat3& a, const Mat3& b) {
    const Mat3 d = a.transpose() * b;
    const Vec3 axis(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
    return std::atan2(0.5 * axis.norm(), 0.5 * (d.trace() - 1.0));
}

inline double translationError(const Pose& a, const Pose& b) { return (a.translation - b.translation).norm(); }

/// Scales an up-to-scale map so that points i and j end up `knownDistance` apart.
inline std::vector<Vec3> resolveScale(std::span<const Vec3> points, std::size_t i, std::size_t j, double knownDistance) {
    if (i >= points.size() || j >= points.size()) throw OutOfRangeError("resolveScale: index out of range");
    if (i == j) throw OutOfRangeError("resolveScale: pair must name two different points");
    if (!(knownDistance > 0)) throw OutOfRangeError("resolveScale: known distance must be positive");
    const double d = (points[i] - points[j]).norm();
    if (!(d > 0)) throw DegenerateConfigurationError("resolveScale: reconstructed pair coincides");
    const double s = knownDistance / d;
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p * s);
    return out;
}

}  // namespace cyclight
