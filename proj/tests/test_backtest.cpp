#include <ssafx/backtest.hpp>
#include <ssafx/synthetic.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

using namespace ssafx;

namespace {

struct Market {
    ReturnPanel panel;
    Eigen::MatrixXd prices;
};

// Row t of the panel holds prices(t) - prices(t-1); row 0 is zero.
Market from_prices(const Eigen::MatrixXd& prices, std::vector<std::string> names)
{
    Market m;
    m.prices = prices;
    m.panel.y = Eigen::MatrixXd::Zero(prices.rows(), prices.cols());
    for (Eigen::Index t = 1; t < prices.rows(); ++t)
        m.panel.y.row(t) = prices.row(t) - prices.row(t - 1);
    for (Eigen::Index t = 0; t < prices.rows(); ++t)
        m.panel.timestamps.push_back(60 * (t + 1));
    m.panel.pair_order = std::move(names);
    return m;
}

Market synthetic(long minutes, std::uint64_t seed, std::vector<std::string> names)
{
    auto spec = reference_market(minutes, seed);
    spec.pairs = names;
    spec.start_prices.resize(names.size());
    for (std::size_t i = 0; i < names.size(); ++i)
        spec.start_prices[i] = 1.0 + 0.1 * static_cast<double>(i);
    PanelConfig pc;
    pc.pair_order = names;
    const auto built = build_panel(generate_market(spec), pc);
    return {built.panel, align_prices(built.prices, built.panel)};
}

StrategyConfig trade_all(const std::vector<std::string>& names, double spread = 0.0)
{
    StrategyConfig s;
    s.traded_pairs = names;
    for (const auto& n : names)
        s.spread_per_pair[n] = spread;
    return s;
}

Forecaster constant(double v)
{
    return [v](const ReturnPanel& p, Eigen::Index) { return Eigen::VectorXd::Constant(p.pairs(), v); };
}

// Knows the next row: the best possible forecast.
Forecaster peek_ahead()
{
    return [](const ReturnPanel& p, Eigen::Index t) -> Eigen::VectorXd { return p.y.row(t + 1).transpose(); };
}

ModelSpec ssa1(Eigen::Index k, Eigen::Index l)
{
    ModelSpec m;
    m.fit.K = k;
    m.fit.l = l;
    m.fit.jacobi.stop = StopMode::Relative;
    return m;
}

std::vector<std::string> generic(int n)
{
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i)
        out.push_back("S" + std::to_string(i));
    return out;
}

Trade trade_with(double pnl) { return Trade{"EURUSD", Direction::Long, 0, 1, 1.0, 1.0, pnl}; }

} // namespace

TEST(Metrics, ProfitAndSharpe)
{
    const std::vector<Trade> t{trade_with(10), trade_with(-5), trade_with(15)};
    EXPECT_DOUBLE_EQ(profit(t), 20.0);
    // mean 20/3, sample sd sqrt(325/3)
    EXPECT_NEAR(sharpe(t), (20.0 / 3.0) / std::sqrt(325.0 / 3.0), 1e-12);
    EXPECT_NEAR(sharpe(t), 0.6405, 1e-4);
}

TEST(Metrics, SharpeErrors)
{
    EXPECT_THROW(sharpe({trade_with(1)}), Error);
    try {
        sharpe({trade_with(2), trade_with(2)});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ZeroVariance);
    }
}

TEST(Metrics, Drawdown)
{
    EXPECT_NEAR(max_drawdown(std::vector<double>{100, 120, 90, 110}), 25.0, 1e-12);
    EXPECT_NEAR(max_drawdown(std::vector<double>{100, 50, 100}), 50.0, 1e-12);
    EXPECT_EQ(max_drawdown(std::vector<double>{100, 101, 102}), 0.0);
    EXPECT_THROW(max_drawdown(std::vector<double>{}), Error);
}

TEST(Backtest, ConstantPricesEarnNothing)
{
    const auto m = from_prices(Eigen::MatrixXd::Constant(30, 2, 1.25), {"EURUSD", "GBPUSD"});
    const auto r = run_backtest(m.panel, m.prices, constant(1.0), trade_all({"EURUSD", "GBPUSD"}), {}, 0);
    EXPECT_EQ(r.profit_P, 0.0);
    EXPECT_EQ(r.drawdown_D, 0.0);
    EXPECT_EQ(r.trade_count, 2u);
    EXPECT_FALSE(r.sharpe_Sh.has_value());
}

TEST(Backtest, UptrendWithOracleForecast)
{
    Eigen::MatrixXd prices(10, 1);
    for (Eigen::Index t = 0; t < 10; ++t)
        prices(t, 0) = 1.3 + 0.0001 * static_cast<double>(t);
    const auto m = from_prices(prices, {"EURUSD"});
    const auto r = run_backtest(m.panel, m.prices, peek_ahead(), trade_all({"EURUSD"}), {}, 0);
    ASSERT_EQ(r.trade_count, 1u);
    EXPECT_EQ(r.trades[0].direction, Direction::Long);
    // Filled on row 1, force-closed on row 9: 8 pips on 10k units.
    EXPECT_NEAR(r.profit_P, 8 * 0.0001 * 10000.0, 1e-9);
    EXPECT_GT(r.profit_P, 0.0);
    EXPECT_EQ(r.drawdown_D, 0.0);
    EXPECT_EQ(r.trades[0].open_time, 120);
    EXPECT_EQ(r.trades[0].close_time, 600);
}

TEST(Backtest, SpreadCostsHalfOnEachSide)
{
    Eigen::MatrixXd prices = Eigen::MatrixXd::Constant(5, 1, 1.0);
    const auto m = from_prices(prices, {"EURUSD"});
    const auto r = run_backtest(m.panel, m.prices, constant(1.0), trade_all({"EURUSD"}, 0.0002), {}, 0);
    ASSERT_EQ(r.trade_count, 1u);
    EXPECT_NEAR(r.trades[0].open_price, 1.0001, 1e-15);
    EXPECT_NEAR(r.trades[0].close_price, 0.9999, 1e-15);
    EXPECT_NEAR(r.profit_P, -0.0002 * 10000.0, 1e-9);
}

TEST(Backtest, ShortReversal)
{
    // Up three bars then down: the oracle goes long, then reverses short.
    Eigen::MatrixXd prices(6, 1);
    prices << 1.0, 1.001, 1.002, 1.003, 1.002, 1.001;
    const auto m = from_prices(prices, {"EURUSD"});
    const auto r = run_backtest(m.panel, m.prices, peek_ahead(), trade_all({"EURUSD"}), {}, 0);
    ASSERT_EQ(r.trade_count, 2u);
    EXPECT_EQ(r.trades[0].direction, Direction::Long);
    EXPECT_EQ(r.trades[1].direction, Direction::Short);
    EXPECT_NEAR(r.trades[0].pnl, 0.001 * 10000, 1e-9);
    EXPECT_NEAR(r.trades[1].pnl, 0.001 * 10000, 1e-9);
}

TEST(Backtest, QuoteCurrencyConversion)
{
    Eigen::MatrixXd prices(4, 3);
    prices << 100.0, 0.80, 1.25, //
        100.0, 0.80, 1.25,        //
        101.0, 0.80, 1.26,        //
        101.0, 0.80, 1.26;
    const auto m = from_prices(prices, {"USDJPY", "AUDUSD", "EURAUD"});
    const auto r = run_backtest(m.panel, m.prices, constant(1.0), trade_all({"USDJPY", "EURAUD"}), {}, 0);
    ASSERT_EQ(r.trade_count, 2u);
    EXPECT_NEAR(r.trades[0].pnl, 1.0 * 10000.0 / 101.0, 1e-9);
    EXPECT_NEAR(r.trades[1].pnl, 0.01 * 10000.0 * 0.80, 1e-9);
    EXPECT_FALSE(r.notes.empty());
}

TEST(Backtest, InsufficientData)
{
    const auto m = from_prices(Eigen::MatrixXd::Constant(5, 1, 1.0), {"EURUSD"});
    try {
        run_backtest(m.panel, m.prices, constant(1.0), trade_all({"EURUSD"}), {}, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    }
    EXPECT_THROW(run_backtest(m.panel, m.prices, ssa1(1, 0), trade_all({"EURUSD"}), {}, 0), Error);
}

TEST(Backtest, AccountingIdentityAndCurveShape)
{
    const auto names = generic(4);
    const auto m = synthetic(1500, 5, names);
    const auto r = run_backtest(m.panel, m.prices, ssa1(2, 1), trade_all(names, 0.00002), {}, 10);
    ASSERT_EQ(r.equity.equity.size(), static_cast<std::size_t>(m.panel.rows() - 10));
    for (std::size_t k = 0; k < r.equity.equity.size(); ++k)
        EXPECT_NEAR(r.equity.equity[k], 10000.0 + r.realized[k] + r.unrealized[k], 1e-6);
    EXPECT_NEAR(r.realized.back(), profit(r.trades), 1e-6);
    EXPECT_EQ(r.unrealized.back(), 0.0);
    EXPECT_NEAR(r.equity.equity.back() - 10000.0, r.profit_P, 1e-6);
    EXPECT_GE(r.drawdown_D, 0.0);
    EXPECT_LE(r.drawdown_D, 100.0);
    for (const auto& t : r.trades)
        EXPECT_LT(t.open_time, t.close_time);
    EXPECT_EQ(r.label, "SSA1");
    EXPECT_EQ(r.l, 1);
}

TEST(Backtest, Deterministic)
{
    const auto names = generic(3);
    const auto m = synthetic(800, 6, names);
    ModelSpec spec = ssa1(2, 1);
    spec.nonlinear.kind = NonlinearKind::Mlp;
    spec.nonlinear.hidden_layers = 2;
    spec.nonlinear.width = 4;
    spec.nonlinear.train.epochs = 20;
    spec.nonlinear.calibration_window = 64;
    spec.nonlinear.refit_every = 100;
    const auto a = run_backtest(m.panel, m.prices, spec, trade_all(names), {}, 5);
    const auto b = run_backtest(m.panel, m.prices, spec, trade_all(names), {}, 5);
    EXPECT_EQ(a.equity.equity, b.equity.equity);
    EXPECT_EQ(a.profit_P, b.profit_P);
}

TEST(Backtest, PrefixReplayMatches)
{
    const auto names = generic(3);
    const auto m = synthetic(1000, 7, names);
    const auto full = run_backtest(m.panel, m.prices, ssa1(2, 1), trade_all(names, 0.00002), {}, 4);
    for (Eigen::Index rows : {200, 517, 999}) {
        Market cut;
        cut.panel.y = m.panel.y.topRows(rows);
        cut.panel.timestamps.assign(m.panel.timestamps.begin(), m.panel.timestamps.begin() + rows);
        cut.panel.pair_order = names;
        cut.prices = m.prices.topRows(rows);
        const auto part = run_backtest(cut.panel, cut.prices, ssa1(2, 1), trade_all(names, 0.00002), {}, 4);
        // Every row except the forced liquidation on the truncated last bar.
        for (std::size_t k = 0; k + 1 < part.equity.equity.size(); ++k)
            ASSERT_EQ(part.equity.equity[k], full.equity.equity[k]) << "rows " << rows << " k " << k;
    }
}

TEST(Backtest, MirroredMarketGivesSameProfit)
{
    const auto names = generic(3);
    const auto m = synthetic(1200, 8, names);
    Market mirror = m;
    mirror.panel.y = -m.panel.y;
    for (Eigen::Index i = 0; i < m.prices.cols(); ++i)
        mirror.prices.col(i) = (2.0 * m.prices(0, i)) - m.prices.col(i).array();
    AccountConfig acct;
    const auto a = run_backtest(m.panel, m.prices, ssa1(2, 1), trade_all(names, 0.00002), acct, 4);
    const auto b = run_backtest(mirror.panel, mirror.prices, ssa1(2, 1), trade_all(names, 0.00002), acct, 4);
    ASSERT_EQ(a.trade_count, b.trade_count);
    EXPECT_NEAR(a.profit_P, b.profit_P, 1e-9 * std::max(1.0, std::abs(a.profit_P)));
    for (std::size_t k = 0; k < a.trades.size(); ++k)
        EXPECT_NE(a.trades[k].direction, b.trades[k].direction);
}

TEST(Backtest, BankruptcyStopsWithFlaggedReport)
{
    Eigen::MatrixXd prices(50, 1);
    for (Eigen::Index t = 0; t < 50; ++t)
        prices(t, 0) = 1.0 - 0.01 * static_cast<double>(t);
    const auto m = from_prices(prices, {"EURUSD"});
    AccountConfig acct;
    acct.margin_call_level = 0.9;
    const auto r = run_backtest(m.panel, m.prices, constant(1.0), trade_all({"EURUSD"}), acct, 0);
    EXPECT_TRUE(r.bankrupt);
    EXPECT_LT(r.equity.equity.size(), 50u);
    EXPECT_LE(r.equity.equity.back(), 9000.0);
    EXPECT_EQ(r.trade_count, 1u);
}

TEST(Backtest, MarginRejection)
{
    const auto m = from_prices(Eigen::MatrixXd::Constant(5, 1, 1.0), {"EURUSD"});
    AccountConfig acct;
    acct.initial_deposit = 50.0; // 10k units at 1.0 with 1:100 needs 100
    const auto r = run_backtest(m.panel, m.prices, constant(1.0), trade_all({"EURUSD"}), acct, 0);
    EXPECT_EQ(r.trade_count, 0u);
    EXPECT_GT(r.margin_rejections, 0u);
}

TEST(Backtest, SweepKeepsOrder)
{
    const auto names = generic(3);
    const auto m = synthetic(600, 9, names);
    std::vector<ModelSpec> specs;
    for (Eigen::Index l = 1; l <= 2; ++l)
        specs.push_back(ssa1(1, l));
    const auto rows = run_sweep(m.panel, m.prices, specs, trade_all(names), {}, 3);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].l, 1);
    EXPECT_EQ(rows[1].l, 2);
    const auto solo = run_backtest(m.panel, m.prices, specs[1], trade_all(names), {}, 3);
    EXPECT_EQ(solo.profit_P, rows[1].profit_P);

    std::ostringstream out;
    write_report_table(out, rows);
    EXPECT_NE(out.str().find("SSA1"), std::string::npos);
}
