#pragma once

// Lag-weight bases, the sum-to-one constraint, and reduced MIDAS regressors.
//
// A predictor's weights are linear in a coefficient vector theta,
//   w = Phi theta,          Phi is K x P,
// and identified by requiring the weights to sum to one, c^T theta = 1 with
// c = Phi^T 1. Writing theta = theta0 + N eta with theta0 = c / |c|^2 and N an
// orthonormal basis of ker(c^T) leaves eta unconstrained, so the aggregate of a
// lag block x_t becomes
//   x_t^T w = c_t + r_t^T eta,   c_t = x_t^T Phi theta0,   r_t = N^T Phi^T x_t.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace midas {

enum class BasisKind { Almon, BSpline };

inline std::string to_string(BasisKind kind)
{
    return kind == BasisKind::Almon ? "almon" : "bspline";
}

inline BasisKind basis_kind_from_string(const std::string& s)
{
    if (s == "almon") return BasisKind::Almon;
    if (s == "bspline") return BasisKind::BSpline;
    throw ConfigError("unknown basis kind '" + s + "' (expected almon or bspline)");
}

struct BasisMatrix {
    Matrix values;  // K x P
    BasisKind kind = BasisKind::Almon;

    Eigen::Index lags() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
};

struct Reparam {
    Vector c;       // Phi^T 1
    Vector theta0;  // c / |c|^2
    Matrix null;    // P x (P-1), orthonormal columns, c^T null = 0

    Eigen::Index free_dim() const { return null.cols(); }
};

struct ReducedRegressors {
    Vector c;  // length T
    Matrix r;  // T x (P-1)
};

/// Almon polynomial basis, entry (k, p) = k^p for k = 0..K-1, p = 0..P-1, with 0^0 = 1.
inline BasisMatrix almon_basis(Eigen::Index lags, Eigen::Index order)
{
    if (lags < 1 || order < 1 || order > lags)
        throw DimensionError("almon_basis: need K >= P >= 1, got K=" + std::to_string(lags) +
                             ", P=" + std::to_string(order));
    BasisMatrix out{Matrix(lags, order), BasisKind::Almon};
    for (Eigen::Index k = 0; k < lags; ++k) {
        double power = 1.0;
        for (Eigen::Index p = 0; p < order; ++p) {
            out.values(k, p) = power;
            power *= static_cast<double>(k);
        }
    }
    return out;
}

namespace detail {

// Clamped uniform knot vector on [0, upper] for a cubic spline with `dim` basis functions.
inline std::vector<double> clamped_uniform_knots(Eigen::Index dim, double upper)
{
    constexpr int degree = 3;
    const Eigen::Index segments = dim - degree;
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(dim + degree + 1));
    for (int i = 0; i <= degree; ++i) knots.push_back(0.0);
    for (Eigen::Index i = 1; i < segments; ++i)
        knots.push_back(upper * static_cast<double>(i) / static_cast<double>(segments));
    for (int i = 0; i <= degree; ++i) knots.push_back(upper);
    return knots;
}

// All cubic B-spline basis values at x (Cox-de Boor recursion).
inline Vector bspline_row(const std::vector<double>& knots, Eigen::Index dim, double x)
{
    constexpr int degree = 3;
    const auto n_knots = static_cast<Eigen::Index>(knots.size());
    const double upper = knots.back();

    // Degree-0 indicators over the n_knots - 1 knot spans.
    Vector b = Vector::Zero(n_knots - 1);
    if (x >= upper) {
        // Right endpoint belongs to the last nondegenerate span.
        for (Eigen::Index i = n_knots - 2; i >= 0; --i) {
            if (knots[static_cast<std::size_t>(i)] < knots[static_cast<std::size_t>(i + 1)]) {
                b(i) = 1.0;
                break;
            }
        }
    } else {
        for (Eigen::Index i = 0; i < n_knots - 1; ++i) {
            const double lo = knots[static_cast<std::size_t>(i)];
            const double hi = knots[static_cast<std::size_t>(i + 1)];
            if (lo <= x && x < hi) {
                b(i) = 1.0;
                break;
            }
        }
    }

    for (int d = 1; d <= degree; ++d) {
        Vector next = Vector::Zero(n_knots - 1 - d);
        for (Eigen::Index i = 0; i < next.size(); ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const auto ud = static_cast<std::size_t>(d);
            double value = 0.0;
            const double left_den = knots[ui + ud] - knots[ui];
            if (left_den > 0.0) value += (x - knots[ui]) / left_den * b(i);
            const double right_den = knots[ui + ud + 1] - knots[ui + 1];
            if (right_den > 0.0) value += (knots[ui + ud + 1] - x) / right_den * b(i + 1);
            next(i) = value;
        }
        b = std::move(next);
    }
    return b.head(dim);
}

} // namespace detail

/// Cubic B-spline basis on a clamped uniform knot vector over [0, K-1],
/// evaluated at the lag indices. Rows sum to one.
inline BasisMatrix bspline_basis(Eigen::Index lags, Eigen::Index dim)
{
    if (dim < 4 || dim > lags)
        throw DimensionError("bspline_basis: need K >= P >= 4, got K=" + std::to_string(lags) +
                             ", P=" + std::to_string(dim));
    const auto knots = detail::clamped_uniform_knots(dim, static_cast<double>(lags - 1));
    BasisMatrix out{Matrix(lags, dim), BasisKind::BSpline};
    for (Eigen::Index k = 0; k < lags; ++k)
        out.values.row(k) = detail::bspline_row(knots, dim, static_cast<double>(k)).transpose();
    return out;
}

inline BasisMatrix make_basis(BasisKind kind, Eigen::Index lags, Eigen::Index dim)
{
    return kind == BasisKind::Almon ? almon_basis(lags, dim) : bspline_basis(lags, dim);
}

/// Null-space reparameterization of c^T theta = 1.
///
/// The kernel basis is built by Gram-Schmidt, starting from c/|c| and greedily
/// adding the identity column with the largest residual (ties go to the lower
/// index), each orthogonalized twice. The c direction is then dropped. This
/// fixes the sign and ordering of N for a given basis.
inline Reparam reparameterize(const BasisMatrix& basis)
{
    const Eigen::Index p = basis.dim();
    Reparam out;
    out.c = basis.values.colwise().sum().transpose();
    const double norm = out.c.norm();
    if (!(norm >= 1e-12))
        throw DegenerateConstraintError("reparameterize: constraint vector c = Phi^T 1 is zero");
    out.theta0 = out.c / (norm * norm);

    Matrix q(p, p);
    q.col(0) = out.c / norm;
    std::vector<bool> used(static_cast<std::size_t>(p), false);
    for (Eigen::Index filled = 1; filled < p; ++filled) {
        Eigen::Index best = -1;
        double best_norm = -1.0;
        Vector best_vec;
        for (Eigen::Index e = 0; e < p; ++e) {
            if (used[static_cast<std::size_t>(e)]) continue;
            Vector v = Vector::Unit(p, e);
            for (int pass = 0; pass < 2; ++pass)
                v -= q.leftCols(filled) * (q.leftCols(filled).transpose() * v);
            const double n = v.norm();
            if (n > best_norm) {
                best_norm = n;
                best = e;
                best_vec = std::move(v);
            }
        }
        used[static_cast<std::size_t>(best)] = true;
        q.col(filled) = best_vec / best_norm;
    }
    out.null = q.rightCols(p - 1);
    return out;
}

inline ReducedRegressors reduced_regressors(const Matrix& x_block, const BasisMatrix& basis,
                                            const Reparam& rep)
{
    if (x_block.cols() != basis.lags())
        throw DimensionError("reduced_regressors: x block has " + std::to_string(x_block.cols()) +
                             " columns, basis has K=" + std::to_string(basis.lags()));
    const Matrix projected = x_block * basis.values;  // T x P
    return {projected * rep.theta0, projected * rep.null};
}

/// Lag weights Phi (theta0 + N eta); they sum to one for every eta.
inline Vector weights_from_eta(const BasisMatrix& basis, const Reparam& rep, const Vector& eta)
{
    if (eta.size() != rep.free_dim())
        throw DimensionError("weights_from_eta: eta has length " + std::to_string(eta.size()) +
                             ", expected " + std::to_string(rep.free_dim()));
    return basis.values * (rep.theta0 + rep.null * eta);
}

/// Least-squares eta whose weights are closest to `profile`.
inline Vector project_profile(const BasisMatrix& basis, const Reparam& rep, const Vector& profile)
{
    if (profile.size() != basis.lags())
        throw DimensionError("project_profile: profile length does not match K");
    if (rep.free_dim() == 0) return Vector(0);
    const Matrix design = basis.values * rep.null;
    const Vector target = profile - basis.values * rep.theta0;
    return design.colPivHouseholderQr().solve(target);
}

} // namespace midas
