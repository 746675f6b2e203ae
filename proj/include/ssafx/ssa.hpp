#pragma once

// SSA across the currency-pair axis.
//
// At a fixed time the M pair returns are embedded into a K x (M-K+1) Hankel
// "information" matrix U (row r = window starting at pair r). The lagged
// variant stacks time-shifted copies of U into a block-Hankel matrix F.
// The leading eigenvectors of U^T U / K (or F^T F / (K*I)) define the
// filter used to forecast the next-step return vector.

#include <ssafx/error.hpp>
#include <ssafx/jacobi.hpp>
#include <ssafx/quotes.hpp>

#include <Eigen/Core>

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>

namespace ssafx {

enum class SsaMode { SSA1, SSA2 };
enum class ForecastRule { Projector, PaperLiteral };

inline std::string_view to_string(SsaMode m) noexcept { return m == SsaMode::SSA1 ? "SSA1" : "SSA2"; }
inline std::string_view to_string(ForecastRule r) noexcept
{
    return r == ForecastRule::Projector ? "Projector" : "PaperLiteral";
}

struct InfoMatrix {
    Eigen::MatrixXd entries; ///< K x (M - K + 1), entries(r, c) = y[c + r]
    Eigen::Index source_time = 0;

    Eigen::Index K() const noexcept { return entries.rows(); }
};

/// Block-Hankel stack of information matrices. Stored flattened: block (a, b)
/// occupies rows [a*K, (a+1)*K) and columns [b*W, (b+1)*W), W = M - K + 1.
struct LagMatrix {
    Eigen::MatrixXd flat;
    Eigen::Index K = 0;
    Eigen::Index M = 0;
    Eigen::Index N = 0;
    Eigen::Index I = 0;
    Eigen::Index start_time = 0;

    Eigen::Index window() const noexcept { return M - K + 1; }
    Eigen::Index block_rows() const noexcept { return I; }
    Eigen::Index block_cols() const noexcept { return N - I + 1; }

    Eigen::MatrixXd block(Eigen::Index a, Eigen::Index b) const
    {
        return flat.block(a * K, b * window(), K, window());
    }
};

struct CorrelationMatrix {
    SymmetricMatrix r;
    double divisor = 1.0;
};

inline InfoMatrix build_info_matrix(const Eigen::Ref<const Eigen::VectorXd>& y_row, Eigen::Index K,
                                    Eigen::Index source_time = 0)
{
    const Eigen::Index M = y_row.size();
    if (K < 1 || K >= M)
        throw Error(ErrorKind::BadK, "need 1 <= K < M (K = " + std::to_string(K) + ", M = " + std::to_string(M) + ")");
    InfoMatrix u;
    u.source_time = source_time;
    u.entries.resize(K, M - K + 1);
    for (Eigen::Index r = 0; r < K; ++r)
        u.entries.row(r) = y_row.segment(r, M - K + 1).transpose();
    return u;
}

/// U^T U / divisor.
inline CorrelationMatrix correlation_matrix(const Eigen::MatrixXd& u, double divisor)
{
    if (!(divisor > 0.0))
        throw Error(ErrorKind::BadParams, "divisor must be positive");
    Eigen::MatrixXd r = u.transpose() * u / divisor;
    return CorrelationMatrix{SymmetricMatrix(r), divisor};
}

inline CorrelationMatrix correlation_matrix(const InfoMatrix& u)
{
    return correlation_matrix(u.entries, static_cast<double>(u.K()));
}

/// F built from panel rows start .. start + N - 1.
inline LagMatrix build_lag_matrix(const ReturnPanel& panel, Eigen::Index start, Eigen::Index K, Eigen::Index N,
                                  Eigen::Index I)
{
    if (N < 1 || I < 1 || (N > 1 && I >= N) || (N == 1 && I != 1))
        throw Error(ErrorKind::BadParams, "need 1 <= I < N (or N = I = 1)");
    if (start < 0 || start + N > panel.rows())
        throw Error(ErrorKind::InsufficientHistory,
                    "lag window [" + std::to_string(start) + ", " + std::to_string(start + N) + ") exceeds panel",
                    static_cast<long>(start));
    LagMatrix f;
    f.K = K;
    f.M = panel.pairs();
    f.N = N;
    f.I = I;
    f.start_time = start;
    if (K < 1 || K >= f.M)
        throw Error(ErrorKind::BadK, "need 1 <= K < M");
    const Eigen::Index w = f.window();
    f.flat.resize(K * I, w * (N - I + 1));
    for (Eigen::Index a = 0; a < I; ++a)
        for (Eigen::Index b = 0; b <= N - I; ++b) {
            const Eigen::VectorXd row = panel.y.row(start + a + b).transpose();
            f.flat.block(a * K, b * w, K, w) = build_info_matrix(row, K, start + a + b).entries;
        }
    return f;
}

struct FitParams {
    SsaMode mode = SsaMode::SSA1;
    Eigen::Index K = 2;
    Eigen::Index l = 1;
    Eigen::Index N = 1;
    Eigen::Index I = 1;
    ForecastRule rule = ForecastRule::Projector;
    /// Number of consecutive embeddings (ending at the fit time) pooled into R2.
    Eigen::Index history_rows = 1;
    JacobiConfig jacobi{};

    Eigen::Index lag_N() const noexcept { return mode == SsaMode::SSA1 ? 1 : N; }
    Eigen::Index lag_I() const noexcept { return mode == SsaMode::SSA1 ? 1 : I; }

    /// Panel rows needed before (and including) the fit time.
    Eigen::Index min_history() const noexcept { return lag_N() + history_rows - 1; }
};

struct ForecastModel {
    SsaMode mode = SsaMode::SSA1;
    ForecastRule rule = ForecastRule::Projector;
    Eigen::Index K = 0;
    Eigen::Index l = 0;
    Eigen::Index N = 1;
    Eigen::Index I = 1;
    Eigen::Index M = 0;
    Eigen::Index fit_time = 0;
    Eigen::Index history_rows = 1;
    Eigen::MatrixXd basis;      ///< d x l leading eigenvectors
    EigenDecomposition eigen;   ///< full decomposition of R2

    Eigen::Index order() const noexcept { return basis.rows(); }

    /// The printed operating range 1 < l < M - K.
    bool in_recommended_band() const noexcept { return l > 1 && l < M - K; }
};

namespace detail {

inline Eigen::MatrixXd embedding(const ReturnPanel& panel, Eigen::Index end, SsaMode mode, Eigen::Index K,
                                 Eigen::Index N, Eigen::Index I)
{
    if (end < 0 || end >= panel.rows())
        throw Error(ErrorKind::InsufficientHistory, "time index out of range", static_cast<long>(end));
    if (mode == SsaMode::SSA1) {
        const Eigen::VectorXd row = panel.y.row(end).transpose();
        return build_info_matrix(row, K, end).entries;
    }
    return build_lag_matrix(panel, end - N + 1, K, N, I).flat;
}

} // namespace detail

/// Fits the eigenbasis on data ending at panel row `end` (inclusive). No row
/// after `end` is read.
inline ForecastModel fit(const ReturnPanel& panel, Eigen::Index end, const FitParams& p)
{
    if (p.l < 1)
        throw Error(ErrorKind::BadL, "l must be >= 1");
    if (p.history_rows < 1)
        throw Error(ErrorKind::BadParams, "history_rows must be >= 1");
    if (p.mode == SsaMode::SSA2 && (p.N < 1 || p.I < 1 || (p.N > 1 && p.I >= p.N) || (p.N == 1 && p.I != 1)))
        throw Error(ErrorKind::BadParams, "need 1 <= I < N (or N = I = 1)");
    if (p.K < 1 || p.K >= panel.pairs())
        throw Error(ErrorKind::BadK, "need 1 <= K < M");
    if (end >= panel.rows() || end - p.min_history() + 1 < 0)
        throw Error(ErrorKind::InsufficientHistory,
                    "fit at row " + std::to_string(end) + " needs " + std::to_string(p.min_history()) + " rows",
                    static_cast<long>(end));

    const Eigen::Index N = p.lag_N();
    const Eigen::Index I = p.lag_I();
    Eigen::MatrixXd gram;
    for (Eigen::Index h = p.history_rows - 1; h >= 0; --h) {
        const Eigen::MatrixXd f = detail::embedding(panel, end - h, p.mode, p.K, N, I);
        if (gram.size() == 0)
            gram = f.transpose() * f;
        else
            gram += f.transpose() * f;
    }
    const double divisor = static_cast<double>(p.K * I * p.history_rows);
    const SymmetricMatrix r2(gram / divisor);
    if (p.l > r2.order())
        throw Error(ErrorKind::BadL, "l = " + std::to_string(p.l) + " exceeds order " + std::to_string(r2.order()));

    ForecastModel model;
    model.mode = p.mode;
    model.rule = p.rule;
    model.K = p.K;
    model.l = p.l;
    model.N = N;
    model.I = I;
    model.M = panel.pairs();
    model.fit_time = end;
    model.history_rows = p.history_rows;
    model.eigen = jacobi_eigen(r2, p.jacobi);
    model.basis = model.eigen.vectors.leftCols(p.l);
    return model;
}

/// Filters one window vector. Output lives in window coordinates.
inline Eigen::VectorXd forecast(const ForecastModel& model, const Eigen::Ref<const Eigen::VectorXd>& current)
{
    if (current.size() != model.order())
        throw Error(ErrorKind::DimensionMismatch,
                    "window has " + std::to_string(current.size()) + " entries, model order " +
                        std::to_string(model.order()));
    if (model.rule == ForecastRule::Projector)
        return model.basis * (model.basis.transpose() * current);
    // out_i = sum_{q<l} basis(i, q) * current[q]
    return model.basis * current.head(model.l);
}

/// Per-pair next-step forecast: every window row of the embedding at `end` is
/// filtered, then each pair's value is the mean of the filtered entries that
/// hold that pair at the latest time.
inline Eigen::VectorXd forecast_pairs(const ForecastModel& model, const ReturnPanel& panel, Eigen::Index end)
{
    if (panel.pairs() != model.M)
        throw Error(ErrorKind::DimensionMismatch, "panel pair count differs from model");
    if (end - model.N + 1 < 0)
        throw Error(ErrorKind::InsufficientHistory, "not enough rows for the lag window", static_cast<long>(end));
    const Eigen::MatrixXd f = detail::embedding(panel, end, model.mode, model.K, model.N, model.I);
    const Eigen::Index w = model.M - model.K + 1;

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.M);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(model.M);
    for (Eigen::Index row = 0; row < f.rows(); ++row) {
        const Eigen::VectorXd filtered = forecast(model, f.row(row).transpose());
        const Eigen::Index a = row / model.K;
        const Eigen::Index r = row % model.K;
        const Eigen::Index b = model.N - 1 - a; // block column holding the latest time
        if (b < 0 || b > model.N - model.I)
            continue;
        for (Eigen::Index c = 0; c < w; ++c) {
            sum[c + r] += filtered[b * w + c];
            count[c + r] += 1.0;
        }
    }
    return sum.cwiseQuotient(count);
}

/// Plain-text diagnostics: parameters, retained/discarded eigenvalues, residual.
inline void dump_model(std::ostream& out, const ForecastModel& m)
{
    char buf[64];
    out << "mode " << to_string(m.mode) << "\n"
        << "rule " << to_string(m.rule) << "\n"
        << "K " << m.K << "\nl " << m.l << "\nN " << m.N << "\nI " << m.I << "\nM " << m.M << "\n"
        << "order " << m.order() << "\n"
        << "fit_time " << m.fit_time << "\n"
        << "history_rows " << m.history_rows << "\n";
    out << "retained";
    for (Eigen::Index q = 0; q < m.l; ++q) {
        std::snprintf(buf, sizeof buf, " %.10g", m.eigen.values[q]);
        out << buf;
    }
    out << "\ndiscarded";
    for (Eigen::Index q = m.l; q < m.eigen.values.size(); ++q) {
        std::snprintf(buf, sizeof buf, " %.10g", m.eigen.values[q]);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.6g", m.eigen.final_offdiag);
    out << "\nsweeps_used " << m.eigen.sweeps_used << "\nrotations " << m.eigen.rotations << "\nfinal_offdiag "
        << buf << "\n";
    if (!m.in_recommended_band())
        out << "note l outside 1 < l < M - K\n";
}

} // namespace ssafx
