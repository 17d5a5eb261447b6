#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/quarter_car.hpp"
#include "tbl/reconstruction.hpp"

namespace tbl {

/// Least-squares fit of the wheel equation
///   m_w a + f = k_s s_d + b_s s_v + k_t (r - x3)
/// for (k_s, b_s, k_t) given the wheel mass. The wheel position is the double
/// integral of the measured acceleration; a fourth-order correction of the
/// trapezoid rule is applied before integrating, and every term of the
/// equation is filtered by the same two-stage high-pass, so the relation
/// stays exact while integration drift is removed.
inline IdentifiedParameters identify_parameters(const SensorStream& stream, const RoadInput& road, double wheel_mass,
                                                const IdentificationOptions& options = {}) {
    require(wheel_mass > 0.0, ErrorKind::precondition, "wheel mass must be positive");
    const double period = stream.sample_period();
    const double fc = options.highpass_cutoff;
    require(fc > 0.0 && fc < 0.5 / period, ErrorKind::precondition, "identification cutoff must be below Nyquist");
    const std::size_t n = stream.size();

    std::vector<double> lhs(n), sd(n), sv(n), r(n), accel(n);
    double distance = options.start_distance;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = stream.records[i];
        if (i > 0) distance += 0.5 * (rec.speed + stream.records[i - 1].speed) * (rec.time - stream.records[i - 1].time);
        lhs[i] = wheel_mass * rec.wheel_acceleration + rec.force;
        sd[i] = rec.shock_displacement;
        sv[i] = rec.shock_velocity;
        r[i] = road.height_at(distance);
        accel[i] = rec.wheel_acceleration;
    }

    // a - (a[n+1] - 2 a[n] + a[n-1]) / 6 cancels the (wT)^2/12 amplitude loss
    // of two trapezoid stages.
    std::vector<double> corrected = accel;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        corrected[i] = accel[i] - (accel[i + 1] - 2.0 * accel[i] + accel[i - 1]) / 6.0;
    }
    const auto x3 = highpass(integrate_trapezoid(highpass(integrate_trapezoid(corrected, period), period, fc), period),
                             period, fc);
    auto hp2 = [&](const std::vector<double>& v) { return highpass(highpass(v, period, fc), period, fc); };
    const auto y = hp2(lhs);
    const auto fsd = hp2(sd);
    const auto fsv = hp2(sv);
    const auto fr = hp2(r);

    const auto skip = static_cast<std::size_t>(std::ceil(5.0 / fc / period));
    require(n > skip + 10, ErrorKind::precondition, "stream too short for identification");
    const auto rows = static_cast<Eigen::Index>(n - skip);
    Eigen::MatrixXd a(rows, 3);
    Eigen::VectorXd b(rows);
    for (Eigen::Index k = 0; k < rows; ++k) {
        const std::size_t i = skip + static_cast<std::size_t>(k);
        a(k, 0) = fsd[i];
        a(k, 1) = fsv[i];
        a(k, 2) = fr[i] - x3[i];
        b(k) = y[i];
    }

    Eigen::Vector3d scale;
    for (int c = 0; c < 3; ++c) {
        scale(c) = a.col(c).norm();
        if (!(scale(c) > 0.0) || !std::isfinite(scale(c))) {
            throw Error(ErrorKind::rank_deficient, "identification regressor " + std::to_string(c) +
                                                       " is zero: the stream lacks excitation");
        }
        a.col(c) /= scale(c);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    const double condition = sigma(0) / sigma(sigma.size() - 1);
    if (!(condition < options.max_condition)) {
        throw Error(ErrorKind::rank_deficient,
                    "identification regression is rank deficient (condition " + std::to_string(condition) + ")");
    }
    const Eigen::Vector3d theta = svd.solve(b).cwiseQuotient(scale);
    a.col(0) *= scale(0);
    a.col(1) *= scale(1);
    a.col(2) *= scale(2);
    const Eigen::VectorXd residual = a * theta - b;

    IdentifiedParameters out;
    out.spring_rate = theta(0);
    out.damping = theta(1);
    out.tire_rate = theta(2);
    out.residual_rms = std::sqrt(residual.squaredNorm() / double(rows));
    out.samples = static_cast<std::size_t>(rows);
    return out;
}

}  // namespace tbl
