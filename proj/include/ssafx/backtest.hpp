#pragma once

// Bar-by-bar walk-forward simulator and its metrics: profit P, per-trade
// Sharpe Sh and maximum drawdown D%.

#include <ssafx/error.hpp>
#include <ssafx/nonlinear.hpp>
#include <ssafx/quotes.hpp>
#include <ssafx/ssa.hpp>
#include <ssafx/strategy.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ssafx {

// ------------------------------------------------------------------ metrics

struct Trade {
    std::string pair;
    Direction direction = Direction::Long;
    Timestamp open_time = 0;
    Timestamp close_time = 0;
    double open_price = 0.0;
    double close_price = 0.0;
    double pnl = 0.0;
};

struct EquityCurve {
    std::vector<Timestamp> timestamps;
    std::vector<double> equity;
};

inline double profit(const std::vector<Trade>& trades)
{
    double total = 0.0;
    for (const auto& t : trades)
        total += t.pnl;
    return total;
}

/// Mean per-trade pnl over its sample standard deviation; no risk-free rate,
/// no annualization.
inline double sharpe(const std::vector<Trade>& trades)
{
    if (trades.size() < 2)
        throw Error(ErrorKind::TooFewTrades, std::to_string(trades.size()) + " trades");
    const double n = static_cast<double>(trades.size());
    const double mean = profit(trades) / n;
    double ss = 0.0;
    for (const auto& t : trades)
        ss += (t.pnl - mean) * (t.pnl - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
        throw Error(ErrorKind::ZeroVariance, "all trade pnls equal");
    return mean / sd;
}

/// Largest peak-to-trough decline as a percentage of the running peak.
inline double max_drawdown(const std::vector<double>& equity)
{
    if (equity.empty())
        throw Error(ErrorKind::EmptyCurve, "equity curve is empty");
    double peak = equity.front();
    double worst = 0.0;
    for (double e : equity) {
        peak = std::max(peak, e);
        if (peak > 0.0)
            worst = std::max(worst, (peak - e) / peak * 100.0);
    }
    return std::min(worst, 100.0);
}

inline double max_drawdown(const EquityCurve& curve) { return max_drawdown(curve.equity); }

// ------------------------------------------------------------------ configs

struct AccountConfig {
    double initial_deposit = 10000.0;
    int leverage = 100;
    double lot_fraction = 0.1;
    double margin_call_level = 0.0; ///< stop when equity <= level * initial_deposit

    static constexpr double standard_lot = 100000.0;

    double units() const noexcept { return lot_fraction * standard_lot; }

    void validate() const
    {
        if (!(initial_deposit > 0.0) || leverage < 1 || !(lot_fraction > 0.0) || !(margin_call_level >= 0.0))
            throw Error(ErrorKind::BadConfig, "account fields must be positive (margin_call_level >= 0)");
    }
};

enum class NonlinearKind { Off, Poly, Mlp };

struct NonlinearSpec {
    NonlinearKind kind = NonlinearKind::Off;
    int degree = 2;
    int hidden_layers = 2;
    int width = 8;
    Activation activation = Activation::Tanh;
    TrainConfig train{};
    int calibration_window = 256;
    int refit_every = 1;
};

struct ModelSpec {
    FitParams fit{};
    NonlinearSpec nonlinear{};
};

/// Forecast for every panel pair at row t. Implementations read rows <= t only.
using Forecaster = std::function<Eigen::VectorXd(const ReturnPanel&, Eigen::Index)>;

// --------------------------------------------------------------- forecaster

/// SSA forecast with optional nonlinear correction phi trained on
/// (filtered[s-1] -> y[s]) pairs from a trailing calibration window.
class SsaForecaster {
public:
    explicit SsaForecaster(ModelSpec spec) : spec_(std::move(spec)) {}

    Eigen::Index min_history() const noexcept { return spec_.fit.min_history(); }
    std::size_t fallbacks() const noexcept { return fallbacks_; }

    Eigen::VectorXd operator()(const ReturnPanel& panel, Eigen::Index t)
    {
        if (spec_.nonlinear.kind == NonlinearKind::Off)
            return linear(panel, t);

        const Eigen::Index first = min_history() - 1;
        const Eigen::Index window = spec_.nonlinear.calibration_window;
        for (Eigen::Index s = std::max(first, t - window); s <= t; ++s)
            if (!filtered_.count(s))
                filtered_.emplace(s, linear(panel, s));
        while (!filtered_.empty() && filtered_.begin()->first < t - window)
            filtered_.erase(filtered_.begin());

        if (!start_)
            start_ = t;
        const bool due = (t - *start_) % std::max(1, spec_.nonlinear.refit_every) == 0;
        if (due || !phi_)
            refit(panel, t);

        const Eigen::VectorXd& now = filtered_.at(t);
        if (!phi_)
            return now;
        return scale_out_.cwiseProduct(nonlinear_forecast(*phi_, now.cwiseQuotient(scale_in_)));
    }

private:
    Eigen::VectorXd linear(const ReturnPanel& panel, Eigen::Index t) const
    {
        return forecast_pairs(fit(panel, t, spec_.fit), panel, t);
    }

    static Eigen::VectorXd rms(const std::vector<Eigen::VectorXd>& v)
    {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(v.front().size());
        for (const auto& x : v)
            s += x.cwiseAbs2();
        s = (s / static_cast<double>(v.size())).cwiseSqrt();
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (!(s[i] > 0.0))
                s[i] = 1.0;
        return s;
    }

    void refit(const ReturnPanel& panel, Eigen::Index t)
    {
        std::vector<Eigen::VectorXd> in;
        std::vector<Eigen::VectorXd> out;
        for (Eigen::Index s = t - spec_.nonlinear.calibration_window + 1; s <= t; ++s) {
            auto prev = filtered_.find(s - 1);
            if (prev == filtered_.end())
                continue;
            in.push_back(prev->second);
            out.push_back(panel.y.row(s).transpose());
        }
        const auto& nl = spec_.nonlinear;
        const std::size_t needed = nl.kind == NonlinearKind::Poly ? static_cast<std::size_t>(nl.degree) + 2 : 8;
        if (in.size() < needed)
            return;
        scale_in_ = rms(in);
        scale_out_ = rms(out);
        for (auto& x : in)
            x = x.cwiseQuotient(scale_in_);
        for (auto& y : out)
            y = y.cwiseQuotient(scale_out_);
        try {
            if (nl.kind == NonlinearKind::Poly) {
                phi_ = polyfit(in, out, nl.degree);
            } else {
                const int dim = static_cast<int>(in.front().size());
                std::vector<int> sizes{dim};
                for (int k = 0; k < nl.hidden_layers; ++k)
                    sizes.push_back(nl.width);
                sizes.push_back(dim);
                phi_ = mlp_train(make_mlp(sizes, nl.activation, nl.train.seed), in, out, nl.train).net;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateDesign)
                throw;
            phi_.reset();
            ++fallbacks_;
        }
    }

    ModelSpec spec_;
    std::map<Eigen::Index, Eigen::VectorXd> filtered_;
    std::optional<NonlinearFilter> phi_;
    Eigen::VectorXd scale_in_;
    Eigen::VectorXd scale_out_;
    std::optional<Eigen::Index> start_;
    std::size_t fallbacks_ = 0;
};

// ------------------------------------------------------------------ engine

struct BacktestReport {
    std::string label;
    Eigen::Index l = 0;
    double profit_P = 0.0;
    std::optional<double> sharpe_Sh; ///< empty when fewer than 2 trades or zero variance
    double drawdown_D = 0.0;
    std::size_t trade_count = 0;
    std::vector<Trade> trades;
    EquityCurve equity;
    std::vector<double> realized;   ///< cumulative realized pnl per equity point
    std::vector<double> unrealized; ///< open-position value per equity point
    bool bankrupt = false;
    Timestamp bankrupt_time = 0;
    std::size_t margin_rejections = 0;
    std::size_t nonlinear_fallbacks = 0;
    std::vector<std::string> notes;
};

namespace detail {

// Converts quote-currency amounts of pair i to USD at row t.
struct QuoteConversion {
    enum class Kind { Unit, Multiply, Divide } kind = Kind::Unit;
    Eigen::Index via = 0;

    double factor(const Eigen::MatrixXd& prices, Eigen::Index t) const
    {
        switch (kind) {
        case Kind::Unit: return 1.0;
        case Kind::Multiply: return prices(t, via);
        case Kind::Divide: return 1.0 / prices(t, via);
        }
        return 1.0;
    }
};

inline QuoteConversion plan_conversion(const std::vector<std::string>& pairs, std::size_t i,
                                       std::vector<std::string>& notes)
{
    const std::string& sym = pairs[i];
    if (sym.size() != 6) {
        notes.push_back(sym + ": not a 6-letter pair, pnl taken 1:1 in deposit currency");
        return {};
    }
    const std::string base = sym.substr(0, 3);
    const std::string quote = sym.substr(3);
    if (quote == "USD")
        return {};
    if (base == "USD")
        return {QuoteConversion::Kind::Divide, static_cast<Eigen::Index>(i)};
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        if (pairs[j] == quote + "USD") {
            notes.push_back(sym + ": quote converted via " + pairs[j]);
            return {QuoteConversion::Kind::Multiply, static_cast<Eigen::Index>(j)};
        }
        if (pairs[j] == "USD" + quote) {
            notes.push_back(sym + ": quote converted via " + pairs[j]);
            return {QuoteConversion::Kind::Divide, static_cast<Eigen::Index>(j)};
        }
    }
    notes.push_back(sym + ": no USD cross for " + quote + ", pnl taken 1:1");
    return {};
}

struct OpenPosition {
    Direction direction = Direction::Flat;
    Timestamp open_time = 0;
    double open_price = 0.0;
};

} // namespace detail

/// Walk-forward simulation. Decisions are taken on row t's close using rows <= t
/// and filled at row t+1's weighted price +- spread/2. `prices` rows align with
/// panel rows. The first decision happens at row `warmup`.
inline BacktestReport run_backtest(const ReturnPanel& panel, const Eigen::MatrixXd& prices, const Forecaster& forecaster,
                                   const StrategyConfig& strategy, const AccountConfig& account, Eigen::Index warmup)
{
    account.validate();
    strategy.validate(panel.pair_order);
    if (prices.rows() != panel.rows() || prices.cols() != panel.pairs())
        throw Error(ErrorKind::DimensionMismatch, "prices do not align with panel");
    if (warmup < 0 || warmup + 2 > panel.rows())
        throw Error(ErrorKind::InsufficientData,
                    "warmup " + std::to_string(warmup) + " leaves no tradable bars in " + std::to_string(panel.rows()));

    BacktestReport report;
    const std::size_t P = strategy.traded_pairs.size();
    std::vector<Eigen::Index> col(P);
    std::vector<double> half_spread(P);
    std::vector<detail::QuoteConversion> conv(P);
    for (std::size_t k = 0; k < P; ++k) {
        col[k] = *panel.pair_index(strategy.traded_pairs[k]);
        half_spread[k] = 0.5 * strategy.spread(strategy.traded_pairs[k]);
        conv[k] = detail::plan_conversion(panel.pair_order, static_cast<std::size_t>(col[k]), report.notes);
    }

    const double units = account.units();
    const double floor = account.margin_call_level * account.initial_deposit;
    std::vector<detail::OpenPosition> pos(P);
    std::vector<std::vector<Action>> pending(P);
    double realized = 0.0;

    auto fill_price = [&](std::size_t k, Eigen::Index t, Direction side, bool opening) {
        // Buying pays the ask, selling receives the bid.
        const bool buy = opening == (side == Direction::Long);
        return prices(t, col[k]) + (buy ? half_spread[k] : -half_spread[k]);
    };
    auto close = [&](std::size_t k, Eigen::Index t) {
        auto& p = pos[k];
        const double exit = fill_price(k, t, p.direction, false);
        const double pnl = sign(p.direction) * (exit - p.open_price) * units * conv[k].factor(prices, t);
        realized += pnl;
        report.trades.push_back(Trade{strategy.traded_pairs[k], p.direction, p.open_time,
                                      panel.timestamps[static_cast<std::size_t>(t)], p.open_price, exit, pnl});
        p = {};
    };
    auto unrealized_at = [&](Eigen::Index t) {
        double u = 0.0;
        for (std::size_t k = 0; k < P; ++k)
            if (pos[k].direction != Direction::Flat)
                u += sign(pos[k].direction) * (fill_price(k, t, pos[k].direction, false) - pos[k].open_price) *
                     units * conv[k].factor(prices, t);
        return u;
    };
    auto used_margin = [&](Eigen::Index t) {
        double m = 0.0;
        for (std::size_t k = 0; k < P; ++k)
            if (pos[k].direction != Direction::Flat)
                m += std::abs(units * prices(t, col[k]) * conv[k].factor(prices, t)) / account.leverage;
        return m;
    };

    const Eigen::Index last = panel.rows() - 1;
    for (Eigen::Index t = warmup; t <= last; ++t) {
        const Timestamp now = panel.timestamps[static_cast<std::size_t>(t)];
        for (std::size_t k = 0; k < P; ++k) {
            for (Action a : pending[k]) {
                if (a == Action::Close && pos[k].direction != Direction::Flat) {
                    close(k, t);
                } else if ((a == Action::OpenLong || a == Action::OpenShort) && t < last &&
                           pos[k].direction == Direction::Flat) {
                    const Direction d = a == Action::OpenLong ? Direction::Long : Direction::Short;
                    const double need =
                        std::abs(units * prices(t, col[k]) * conv[k].factor(prices, t)) / account.leverage;
                    const double equity = account.initial_deposit + realized + unrealized_at(t);
                    if (equity - used_margin(t) < need) {
                        ++report.margin_rejections;
                        continue;
                    }
                    pos[k] = {d, now, fill_price(k, t, d, true)};
                }
            }
            pending[k].clear();
        }

        if (t == last)
            for (std::size_t k = 0; k < P; ++k)
                if (pos[k].direction != Direction::Flat)
                    close(k, t);

        const double open_value = unrealized_at(t);
        const double equity = account.initial_deposit + realized + open_value;
        report.equity.timestamps.push_back(now);
        report.equity.equity.push_back(equity);
        report.realized.push_back(realized);
        report.unrealized.push_back(open_value);

        if (equity <= floor) {
            for (std::size_t k = 0; k < P; ++k)
                if (pos[k].direction != Direction::Flat)
                    close(k, t);
            report.equity.equity.back() = account.initial_deposit + realized;
            report.realized.back() = realized;
            report.unrealized.back() = 0.0;
            report.bankrupt = true;
            report.bankrupt_time = now;
            report.notes.push_back("Bankrupt at " + std::to_string(now) + ": partial report");
            break;
        }
        if (t == last)
            break;

        const Eigen::VectorXd fc = forecaster(panel, t);
        const auto signals = generate_signals(fc, panel.pair_order, strategy);
        for (std::size_t k = 0; k < P; ++k)
            pending[k] = next_position(pos[k].direction, signals[k], strategy);
    }

    report.trade_count = report.trades.size();
    report.profit_P = profit(report.trades);
    report.drawdown_D = max_drawdown(report.equity);
    try {
        report.sharpe_Sh = sharpe(report.trades);
    } catch (const Error&) {
        report.sharpe_Sh.reset();
    }
    return report;
}

/// Runs the SSA model spec; warmup must cover the model's history needs.
inline BacktestReport run_backtest(const ReturnPanel& panel, const Eigen::MatrixXd& prices, const ModelSpec& spec,
                                   const StrategyConfig& strategy, const AccountConfig& account, Eigen::Index warmup)
{
    if (spec.fit.l < 1)
        throw Error(ErrorKind::BadL, "l must be >= 1");
    if (warmup < spec.fit.min_history() - 1)
        throw Error(ErrorKind::InsufficientData,
                    "warmup " + std::to_string(warmup) + " below model history " +
                        std::to_string(spec.fit.min_history()));
    SsaForecaster model(spec);
    BacktestReport report = run_backtest(
        panel, prices, [&model](const ReturnPanel& p, Eigen::Index t) { return model(p, t); }, strategy, account,
        warmup);
    report.l = spec.fit.l;
    report.label = std::string(to_string(spec.fit.mode));
    report.nonlinear_fallbacks = model.fallbacks();
    return report;
}

/// Independent backtests per spec, run concurrently; results keep spec order.
inline std::vector<BacktestReport> run_sweep(const ReturnPanel& panel, const Eigen::MatrixXd& prices,
                                             const std::vector<ModelSpec>& specs, const StrategyConfig& strategy,
                                             const AccountConfig& account, Eigen::Index warmup)
{
    std::vector<std::future<BacktestReport>> jobs;
    jobs.reserve(specs.size());
    for (const auto& spec : specs)
        jobs.push_back(std::async(std::launch::async, [&, spec] {
            return run_backtest(panel, prices, spec, strategy, account, warmup);
        }));
    std::vector<BacktestReport> out;
    out.reserve(specs.size());
    for (auto& j : jobs)
        out.push_back(j.get());
    return out;
}

// ------------------------------------------------------------------ output

/// Table with columns `l  P,$  Sh  D%  trades`; the label is printed on the
/// first row of each run of equal labels.
inline void write_report_table(std::ostream& out, const std::vector<BacktestReport>& rows)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-6s %3s %12s %8s %8s %8s\n", "", "l", "P,$", "Sh", "D%", "trades");
    out << buf;
    std::string prev;
    for (const auto& r : rows) {
        const std::string label = r.label == prev ? "" : r.label;
        prev = r.label;
        char sh[32];
        if (r.sharpe_Sh)
            std::snprintf(sh, sizeof sh, "%.2f", *r.sharpe_Sh);
        else
            std::snprintf(sh, sizeof sh, "n/a");
        std::snprintf(buf, sizeof buf, "%-6s %3ld %12.1f %8s %8.2f %8zu\n", label.c_str(), static_cast<long>(r.l),
                      r.profit_P, sh, r.drawdown_D, r.trade_count);
        out << buf;
    }
}

inline void write_equity_csv(std::ostream& out, const EquityCurve& curve)
{
    out << "timestamp,equity\n";
    for (std::size_t k = 0; k < curve.equity.size(); ++k)
        out << curve.timestamps[k] << ',' << detail::format_double(curve.equity[k]) << '\n';
}

inline void write_trades_csv(std::ostream& out, const std::vector<Trade>& trades)
{
    out << "pair,dir,open_time,close_time,open_price,close_price,pnl\n";
    for (const auto& t : trades)
        out << t.pair << ',' << to_string(t.direction) << ',' << t.open_time << ',' << t.close_time << ','
            << detail::format_double(t.open_price) << ',' << detail::format_double(t.close_price) << ','
            << detail::format_double(t.pnl) << '\n';
}

} // namespace ssafx
