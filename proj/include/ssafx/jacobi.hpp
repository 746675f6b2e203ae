#pragma once

// Classical Jacobi eigendecomposition of real symmetric matrices.
//
// Each step picks the off-diagonal element of largest modulus and applies the
// plane rotation that annihilates it. Rotations are accumulated into the
// eigenvector matrix; the diagonal converges to the eigenvalues.

#include <ssafx/error.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace ssafx {

class SymmetricMatrix {
public:
    SymmetricMatrix() = default;

    /// Throws NotSymmetric when a(m,n) and a(n,m) differ by more than 1e-12
    /// relative. Stored entries are the symmetrized average.
    explicit SymmetricMatrix(const Eigen::MatrixXd& a)
    {
        if (a.rows() != a.cols() || a.rows() < 1)
            throw Error(ErrorKind::NotSymmetric, "matrix must be square with order >= 1");
        if (!a.allFinite())
            throw Error(ErrorKind::NotSymmetric, "matrix has non-finite entries");
        for (Eigen::Index m = 0; m < a.rows(); ++m)
            for (Eigen::Index n = m + 1; n < a.cols(); ++n) {
                const double scale = std::max({1.0, std::abs(a(m, n)), std::abs(a(n, m))});
                if (std::abs(a(m, n) - a(n, m)) > 1e-12 * scale)
                    throw Error(ErrorKind::NotSymmetric,
                                "entry (" + std::to_string(m) + "," + std::to_string(n) + ")");
            }
        a_ = 0.5 * (a + a.transpose());
    }

    Eigen::Index order() const noexcept { return a_.rows(); }
    const Eigen::MatrixXd& matrix() const noexcept { return a_; }
    double operator()(Eigen::Index m, Eigen::Index n) const { return a_(m, n); }

private:
    Eigen::MatrixXd a_;
};

enum class StopMode {
    Absolute, ///< stop when max |a_mn| < epsilon
    Relative, ///< stop when max |a_mn| < epsilon * ||A||_F
};

struct JacobiConfig {
    double epsilon = 0.001;
    int max_sweeps = 100; ///< one sweep = d(d-1)/2 rotations
    StopMode stop = StopMode::Absolute;

    void validate() const
    {
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw Error(ErrorKind::BadConfig, "epsilon must lie in (0, 1)");
        if (max_sweeps < 1)
            throw Error(ErrorKind::BadConfig, "max_sweeps must be >= 1");
    }
};

struct EigenDecomposition {
    Eigen::VectorXd values;  ///< sorted by |lambda| descending
    Eigen::MatrixXd vectors; ///< column q pairs with values[q]
    int sweeps_used = 0;
    long rotations = 0;
    double final_offdiag = 0.0; ///< max |a_mn| when the iteration stopped
};

/// Diagnostic record emitted after every rotation.
struct RotationStep {
    Eigen::Index m = 0;
    Eigen::Index n = 0;
    double angle = 0.0;
    double annihilated = 0.0;   ///< rotated (m,n) entry as computed, before it is stored as 0
    double offdiag_norm = 0.0;  ///< off-diagonal Frobenius norm after the rotation
};

using RotationObserver = std::function<void(const RotationStep&)>;

/// Angle that zeroes a_mn under the rotation (m: c, s; n: -s, c).
/// Lies in (-pi/4, pi/4]; equal diagonal entries give pi/4 * sign(a_mn).
inline double rotation_angle(double a_mm, double a_nn, double a_mn) noexcept
{
    if (a_mn == 0.0)
        return 0.0;
    const double diff = a_mm - a_nn;
    if (diff == 0.0)
        return std::copysign(std::numbers::pi / 4.0, a_mn);
    return 0.5 * std::atan(2.0 * a_mn / diff);
}

namespace detail {

inline double offdiag_frobenius(const Eigen::MatrixXd& a)
{
    double s = 0.0;
    for (Eigen::Index m = 0; m < a.rows(); ++m)
        for (Eigen::Index n = 0; n < a.cols(); ++n)
            if (m != n)
                s += a(m, n) * a(m, n);
    return std::sqrt(s);
}

// Orders eigenpairs by |lambda| descending; near-equal moduli fall back to the
// signed value, then the original index.
inline std::vector<Eigen::Index> eigen_order(const Eigen::VectorXd& values)
{
    const Eigen::Index d = values.size();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    auto before = [&](Eigen::Index a, Eigen::Index b) {
        const double ma = std::abs(values[a]);
        const double mb = std::abs(values[b]);
        if (std::abs(ma - mb) > 1e-12 * scale)
            return ma > mb;
        if (values[a] != values[b])
            return values[a] > values[b];
        return a < b;
    };
    std::vector<Eigen::Index> idx;
    for (Eigen::Index q = 0; q < d; ++q) {
        auto pos = idx.end();
        while (pos != idx.begin() && before(q, *(pos - 1)))
            --pos;
        idx.insert(pos, q);
    }
    return idx;
}

} // namespace detail

/// Classical (largest-element) Jacobi iteration. Throws DidNotConverge when the
/// rotation budget of max_sweeps * d(d-1)/2 is spent before the threshold.
inline EigenDecomposition jacobi_eigen(const SymmetricMatrix& matrix, const JacobiConfig& cfg = {},
                                       const RotationObserver& observer = {})
{
    cfg.validate();
    const Eigen::Index d = matrix.order();
    Eigen::MatrixXd a = matrix.matrix();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d);

    const double threshold = cfg.stop == StopMode::Absolute ? cfg.epsilon : cfg.epsilon * a.norm();
    const long pairs = static_cast<long>(d) * (d - 1) / 2;
    const long budget = static_cast<long>(cfg.max_sweeps) * pairs;

    long rotations = 0;
    double largest = 0.0;
    for (;;) {
        Eigen::Index p = 0;
        Eigen::Index q = 0;
        largest = 0.0;
        for (Eigen::Index m = 0; m < d; ++m)
            for (Eigen::Index n = m + 1; n < d; ++n)
                if (std::abs(a(m, n)) > largest) {
                    largest = std::abs(a(m, n));
                    p = m;
                    q = n;
                }
        if (largest == 0.0 || largest < threshold)
            break;
        if (rotations >= budget) {
            const int sweeps = static_cast<int>((rotations + pairs - 1) / pairs);
            throw Error(ErrorKind::DidNotConverge,
                        "sweeps " + std::to_string(sweeps) + ", final off-diagonal " + std::to_string(largest),
                        sweeps);
        }

        const double app = a(p, p);
        const double aqq = a(q, q);
        const double apq = a(p, q);
        const double theta = rotation_angle(app, aqq, apq);
        const double c = std::cos(theta);
        const double s = std::sin(theta);

        // Columns/rows p and q of A' = J^T A J with J(p,p)=J(q,q)=c, J(q,p)=s, J(p,q)=-s.
        for (Eigen::Index k = 0; k < d; ++k) {
            if (k == p || k == q)
                continue;
            const double akp = a(k, p);
            const double akq = a(k, q);
            a(k, p) = a(p, k) = c * akp + s * akq;
            a(k, q) = a(q, k) = -s * akp + c * akq;
        }
        const double annihilated = (c * c - s * s) * apq - c * s * (app - aqq);
        a(p, p) = c * c * app + 2.0 * c * s * apq + s * s * aqq;
        a(q, q) = s * s * app - 2.0 * c * s * apq + c * c * aqq;
        a(p, q) = a(q, p) = 0.0;

        for (Eigen::Index k = 0; k < d; ++k) {
            const double vkp = v(k, p);
            const double vkq = v(k, q);
            v(k, p) = c * vkp + s * vkq;
            v(k, q) = -s * vkp + c * vkq;
        }
        ++rotations;

        if (observer)
            observer(RotationStep{p, q, theta, annihilated, detail::offdiag_frobenius(a)});
    }

    EigenDecomposition out;
    const Eigen::VectorXd diag = a.diagonal();
    const auto order = detail::eigen_order(diag);
    out.values.resize(d);
    out.vectors.resize(d, d);
    for (Eigen::Index q = 0; q < d; ++q) {
        out.values[q] = diag[order[static_cast<std::size_t>(q)]];
        out.vectors.col(q) = v.col(order[static_cast<std::size_t>(q)]);
    }
    out.rotations = rotations;
    out.sweeps_used = pairs == 0 ? 0 : static_cast<int>((rotations + pairs - 1) / pairs);
    out.final_offdiag = largest;
    return out;
}

/// V * diag(lambda) * V^T.
inline SymmetricMatrix reconstruct(const EigenDecomposition& decomp)
{
    const Eigen::MatrixXd a = decomp.vectors * decomp.values.asDiagonal() * decomp.vectors.transpose();
    return SymmetricMatrix(0.5 * (a + a.transpose()));
}

} // namespace ssafx
