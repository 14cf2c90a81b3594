#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "trajcal/geometry.hpp"
#include "trajcal/random.hpp"

namespace trajcal {

/// Determinant floor below which a covariance is treated as numerically
/// singular by the inverse/log based operations.
inline constexpr double kMinCovarianceDet = 1e-18;

/// Bivariate Gaussian over a planar position, stored canonically as
/// (mu_x, mu_y, sx, sy, rho) with sx, sy the standard deviations in meters
/// and rho the correlation. The covariance matrix is derived on demand.
struct Gaussian2 {
    double mu_x = 0.0;
    double mu_y = 0.0;
    double sx = 1.0;
    double sy = 1.0;
    double rho = 0.0;

    Point2 mean() const { return {mu_x, mu_y}; }
    double cov_xx() const { return sx * sx; }
    double cov_xy() const { return rho * sx * sy; }
    double cov_yy() const { return sy * sy; }
    double det() const { return sx * sx * sy * sy * (1.0 - rho * rho); }

    bool valid() const {
        return std::isfinite(mu_x) && std::isfinite(mu_y) && std::isfinite(sx) &&
               std::isfinite(sy) && std::isfinite(rho) && sx > 0.0 && sy > 0.0 &&
               rho > -1.0 && rho < 1.0;
    }
};

inline void require_valid(const Gaussian2& g) {
    if (!g.valid()) {
        throw std::invalid_argument(
            "Gaussian2: invalid parameters (need finite values, sx,sy > 0, |rho| < 1)");
    }
}

/// Validity plus the determinant floor required wherever the inverse or a
/// log-determinant is taken.
inline void require_invertible(const Gaussian2& g) {
    require_valid(g);
    if (g.det() < kMinCovarianceDet) {
        throw std::invalid_argument("Gaussian2: covariance numerically singular (det < 1e-18)");
    }
}

/// Squared Mahalanobis distance (p - mu)^T Sigma^-1 (p - mu), via the
/// closed-form 2x2 inverse.
inline double mahalanobis_sq(Point2 p, const Gaussian2& g) {
    require_invertible(g);
    if (!is_finite(p)) throw std::invalid_argument("mahalanobis_sq: non-finite point");
    const double u = (p.x - g.mu_x) / g.sx;
    const double v = (p.y - g.mu_y) / g.sy;
    const double q = 1.0 - g.rho * g.rho;
    return (u * u - 2.0 * g.rho * u * v + v * v) / q;
}

/// CDF of the chi-squared distribution with 2 degrees of freedom,
/// F(x) = 1 - exp(-x/2).
inline double chi2_cdf_2dof(double d2) {
    if (!(d2 >= 0.0)) throw std::invalid_argument("chi2_cdf_2dof: input must be >= 0");
    return -std::expm1(-0.5 * d2);
}

/// Inverse of chi2_cdf_2dof: -2 ln(1 - p), defined on [0, 1).
inline double chi2_quantile_2dof(double p) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw std::invalid_argument("chi2_quantile_2dof: p must be in [0, 1)");
    }
    return -2.0 * std::log1p(-p);
}

/// True iff p lies inside or on the confidence region of g at `level`.
inline bool contains_at_level(Point2 p, const Gaussian2& g, double level) {
    return mahalanobis_sq(p, g) <= chi2_quantile_2dof(level);
}

/// One draw from N(mu, Sigma). Uses the Cholesky factor of Sigma, so
/// near-degenerate covariances sample fine.
inline Point2 sample(const Gaussian2& g, Rng& rng) {
    require_valid(g);
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    return {g.mu_x + g.sx * z1,
            g.mu_y + g.sy * (g.rho * z1 + std::sqrt(1.0 - g.rho * g.rho) * z2)};
}

/// n >= 3 points on the boundary of the confidence region at `level`,
/// i.e. the locus mahalanobis_sq(x, g) = chi2_quantile_2dof(level).
inline std::vector<Point2> ellipse_points(const Gaussian2& g, double level, int n) {
    require_valid(g);
    if (n < 3) throw std::invalid_argument("ellipse_points: need n >= 3");
    const double r = std::sqrt(chi2_quantile_2dof(level));
    const double c = std::sqrt(1.0 - g.rho * g.rho);
    std::vector<Point2> pts;
    pts.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double a = 2.0 * M_PI * k / n;
        const double z1 = std::cos(a);
        const double z2 = std::sin(a);
        pts.push_back({g.mu_x + r * g.sx * z1,
                       g.mu_y + r * g.sy * (g.rho * z1 + c * z2)});
    }
    return pts;
}

/// Builds a Gaussian2 from a mean and covariance matrix entries.
inline Gaussian2 from_covariance(Point2 mu, double cxx, double cxy, double cyy) {
    if (!(cxx > 0.0) || !(cyy > 0.0)) {
        throw std::invalid_argument("from_covariance: diagonal entries must be positive");
    }
    Gaussian2 g;
    g.mu_x = mu.x;
    g.mu_y = mu.y;
    g.sx = std::sqrt(cxx);
    g.sy = std::sqrt(cyy);
    g.rho = cxy / (g.sx * g.sy);
    require_valid(g);
    return g;
}

/// Pushes g through x -> A x + b with A = {a00, a01, a10, a11}; the mean maps
/// to A mu + b and the covariance to A Sigma A^T.
inline Gaussian2 affine_transform(const Gaussian2& g, const std::array<double, 4>& A, Point2 b) {
    require_valid(g);
    const double det_a = A[0] * A[3] - A[1] * A[2];
    if (det_a == 0.0) throw std::invalid_argument("affine_transform: singular matrix");
    const double cxx = g.cov_xx(), cxy = g.cov_xy(), cyy = g.cov_yy();
    const double m0 = A[0] * cxx + A[1] * cxy;
    const double m1 = A[0] * cxy + A[1] * cyy;
    const double m2 = A[2] * cxx + A[3] * cxy;
    const double m3 = A[2] * cxy + A[3] * cyy;
    const double nxx = m0 * A[0] + m1 * A[1];
    const double nxy = m0 * A[2] + m1 * A[3];
    const double nyy = m2 * A[2] + m3 * A[3];
    return from_covariance({A[0] * g.mu_x + A[1] * g.mu_y + b.x,
                            A[2] * g.mu_x + A[3] * g.mu_y + b.y},
                           nxx, nxy, nyy);
}

/// Scales the covariance (not the standard deviations) by `factor`.
inline Gaussian2 scaled_covariance(const Gaussian2& g, double factor) {
    if (!(factor > 0.0)) throw std::invalid_argument("scaled_covariance: factor must be > 0");
    Gaussian2 out = g;
    const double s = std::sqrt(factor);
    out.sx *= s;
    out.sy *= s;
    return out;
}

}  // namespace trajcal
