// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <ssafx/cli.hpp>
#include <ssafx/ssafx.hpp>

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

using namespace ssafx;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

JacobiConfig tight()
{
    JacobiConfig cfg;
    cfg.epsilon = 1e-13;
    cfg.stop = StopMode::Relative;
    return cfg;
}

Outcome eigensolver_oracle()
{
    Rng rng(20240101);
    double worst_value = 0.0, worst_recon = 0.0;
    const auto t0 = Clock::now();
    for (int k = 0; k < 1000; ++k) {
        const Eigen::Index order = 2 + k % 9;
        const Eigen::MatrixXd a = oracle::random_symmetric(rng, order);
        const auto expect = order == 2   ? oracle::eigen2(a)
                            : order == 3 ? oracle::eigen3(a)
                                         : oracle::eigen_bisection(a);
        const auto d = jacobi_eigen(SymmetricMatrix(a), tight());
        std::vector<double> got(d.values.data(), d.values.data() + d.values.size());
        std::sort(got.rbegin(), got.rend());
        for (std::size_t q = 0; q < got.size(); ++q)
            worst_value = std::max(worst_value, std::abs(got[q] - expect[q]));
        worst_recon = std::max(worst_recon, (reconstruct(d).matrix() - a).norm());
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "max eigenvalue error %.2e, max reconstruction %.2e, %.2f s", worst_value,
                  worst_recon, secs);
    return {worst_value <= 1e-9 && worst_recon <= 1e-8 && secs < 5.0, buf};
}

Outcome jacobi_faithfulness()
{
    Rng rng(99);
    double worst = 0.0;
    long fixtures = 0, failures = 0;
    for (int k = 0; k < 300; ++k) {
        const Eigen::Index order = 2 + k % 15;
        JacobiConfig cfg; // absolute epsilon = 0.001
        try {
            jacobi_eigen(SymmetricMatrix(oracle::random_symmetric(rng, order)), cfg,
                         [&](const RotationStep& s) { worst = std::max(worst, std::abs(s.annihilated)); });
        } catch (const Error&) {
            ++failures;
        }
        ++fixtures;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "max |a_mn| after rotation %.2e, %ld/%ld fixtures stopped within cap", worst,
                  fixtures - failures, fixtures);
    return {worst <= 1e-15 && failures == 0, buf};
}

Outcome ssa_rank_exactness()
{
    Rng rng(5);
    const std::vector<std::vector<double>> ratio_sets{{0.8}, {0.9, -0.7}, {1.1, 0.6, -0.9}, {0.95, -0.5, 0.7, 1.2}};
    double worst_exact = 0.0;
    bool monotone = true;
    for (int trial = 0; trial < 20; ++trial) {
        const auto& ratios = ratio_sets[static_cast<std::size_t>(trial) % ratio_sets.size()];
        const auto rank = static_cast<Eigen::Index>(ratios.size());
        const auto panel = oracle::rank_hankel_panel(rng, 14, 12, ratios);
        FitParams p;
        p.K = 4;
        p.history_rows = 6;
        p.jacobi = tight();
        const Eigen::Index end = 11;
        const Eigen::VectorXd next = panel.y.row(end + 1).transpose();
        std::vector<double> err;
        for (Eigen::Index l = rank; l >= 1; --l) {
            p.l = l;
            const auto model = fit(panel, end, p);
            const auto x = build_info_matrix(next, p.K, end + 1);
            double e = 0.0;
            for (Eigen::Index r = 0; r < x.K(); ++r)
                e = std::max(e, (forecast(model, x.entries.row(r).transpose()) -
                                 x.entries.row(r).transpose())
                                    .cwiseAbs()
                                    .maxCoeff());
            err.push_back(e);
        }
        worst_exact = std::max(worst_exact, err.front());
        for (std::size_t q = 1; q < err.size(); ++q)
            monotone = monotone && err[q] > err[q - 1];
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "max error at true rank %.2e, error strictly increasing as l drops: %s",
                  worst_exact, monotone ? "yes" : "no");
    return {worst_exact <= 1e-8 && monotone, buf};
}

Outcome ssa2_degeneracy()
{
    Rng rng(11);
    int identical = 0;
    for (int k = 0; k < 50; ++k) {
        const Eigen::Index M = 3 + k % 6;
        const auto panel = oracle::random_panel(rng, 20, M);
        FitParams a;
        a.K = 1 + k % (M - 1);
        a.l = 1 + k % (M - a.K + 1);
        a.history_rows = 1 + k % 3;
        FitParams b = a;
        b.mode = SsaMode::SSA2;
        b.N = b.I = 1;
        const Eigen::Index end = 19;
        const Eigen::VectorXd fa = forecast_pairs(fit(panel, end, a), panel, end);
        const Eigen::VectorXd fb = forecast_pairs(fit(panel, end, b), panel, end);
        if (fa.size() == fb.size() && std::memcmp(fa.data(), fb.data(), sizeof(double) * fa.size()) == 0)
            ++identical;
    }
    return {identical == 50, std::to_string(identical) + "/50 panels bit-identical"};
}

Outcome gradient_correctness()
{
    Rng rng(3);
    double worst = 0.0;
    for (int depth = 2; depth <= 9; ++depth) {
        std::vector<int> sizes{6};
        for (int k = 0; k < depth; ++k)
            sizes.push_back(8);
        sizes.push_back(6);
        const auto net = make_mlp(sizes, Activation::Tanh, static_cast<std::uint64_t>(depth));
        Eigen::VectorXd x(6), y(6);
        for (Eigen::Index i = 0; i < 6; ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
        }
        worst = std::max(worst, gradient_check(net, x, y));
    }
    std::vector<Eigen::VectorXd> in(4, Eigen::VectorXd(2)), out(4, Eigen::VectorXd(1));
    in[0] << 0, 0;
    in[1] << 0, 1;
    in[2] << 1, 0;
    in[3] << 1, 1;
    out[0] << 0;
    out[1] << 1;
    out[2] << 1;
    out[3] << 0;
    TrainConfig cfg;
    cfg.epochs = 5000;
    cfg.learning_rate = 0.5;
    cfg.seed = 42;
    const auto r = mlp_train(make_mlp({2, 4, 1}, Activation::Tanh, cfg.seed), in, out, cfg);
    char buf[160];
    std::snprintf(buf, sizeof buf, "max relative gradient error (T=2..9) %.2e, XOR MSE %.4f", worst, r.final_loss);
    return {worst <= 1e-4 && r.final_loss < 0.05, buf};
}

struct Market {
    ReturnPanel panel;
    Eigen::MatrixXd prices;
};

Market synthetic_market(SyntheticMarket spec, int pre_average)
{
    PanelConfig pc;
    pc.pair_order = spec.pairs;
    const auto built = build_panel(generate_market(spec), pc);
    Market m;
    m.panel = smooth_panel(built.panel, pre_average);
    m.prices = align_prices(built.prices, m.panel);
    return m;
}

Outcome backtest_integrity()
{
    auto spec = reference_market(10000, 2024);
    for (int i = 0; i < 8; ++i)
        spec.pairs[static_cast<std::size_t>(i)] = "S" + std::to_string(i); // quote conversion 1:1 for the mirror
    const auto m = synthetic_market(spec, 5);

    ModelSpec model;
    model.fit.K = 4;
    model.fit.l = 2;
    model.fit.jacobi.stop = StopMode::Relative;
    StrategyConfig strategy;
    strategy.traded_pairs = spec.pairs;
    for (const auto& p : spec.pairs)
        strategy.spread_per_pair[p] = 0.00002;
    const AccountConfig account;
    const Eigen::Index warmup = 4;

    const auto t0 = Clock::now();
    const auto full = run_backtest(m.panel, m.prices, model, strategy, account, warmup);
    const double secs = seconds_since(t0);
    const auto again = run_backtest(m.panel, m.prices, model, strategy, account, warmup);
    const bool deterministic = full.equity.equity == again.equity.equity && full.profit_P == again.profit_P;

    double identity = 0.0;
    for (std::size_t k = 0; k < full.equity.equity.size(); ++k)
        identity = std::max(identity, std::abs(full.equity.equity[k] - (account.initial_deposit + full.realized[k] +
                                                                          full.unrealized[k])));
    identity = std::max(identity, std::abs(full.realized.back() - profit(full.trades)));

    bool prefix = true;
    for (Eigen::Index rows : {1000, 4321, 8000}) {
        ReturnPanel cut;
        cut.y = m.panel.y.topRows(rows);
        cut.timestamps.assign(m.panel.timestamps.begin(), m.panel.timestamps.begin() + rows);
        cut.pair_order = m.panel.pair_order;
        const auto part = run_backtest(cut, m.prices.topRows(rows), model, strategy, account, warmup);
        for (std::size_t k = 0; k + 1 < part.equity.equity.size(); ++k)
            prefix = prefix && part.equity.equity[k] == full.equity.equity[k];
    }

    Market mirror = m;
    mirror.panel.y = -m.panel.y;
    for (Eigen::Index i = 0; i < m.prices.cols(); ++i)
        mirror.prices.col(i) = 2.0 * m.prices(0, i) - m.prices.col(i).array();
    const auto mirrored = run_backtest(mirror.panel, mirror.prices, model, strategy, account, warmup);
    const double mirror_gap = std::abs(mirrored.profit_P - full.profit_P);

    const bool dd = full.drawdown_D >= 0.0 && full.drawdown_D <= 100.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "prefix replay %s, identity %.2e, deterministic %s, D=%.3f%%, mirror gap %.2e, %zu trades, %.2f s",
                  prefix ? "ok" : "BROKEN", identity, deterministic ? "yes" : "no", full.drawdown_D, mirror_gap,
                  full.trade_count, secs);
    return {prefix && identity <= 1e-6 && deterministic && dd && mirror_gap <= 1e-9 && secs < 60.0, buf};
}

Outcome protocol_shape()
{
    // One year of one-minute bars for the eight reference pairs.
    cli::RunConfig cfg;
    auto spec = reference_market(365L * 24 * 60, 7);
    spec.start = cli::detail::epoch_minutes(2012, 9, 30);
    cfg.pair_order = spec.pairs;
    cfg.traded_pairs = {"EURUSD"};
    cfg.ssa2_nonlinear = "mlp:2,8";
    for (const auto& p : spec.pairs)
        cfg.spread_per_pair[p] = p == "USDJPY" ? 0.01 : 0.0001; // one pip
    cli::validate(cfg, false);

    const auto t0 = Clock::now();
    const auto m = synthetic_market(spec, cfg.pre_average_p);
    std::vector<ModelSpec> specs;
    long warmup = 0;
    for (SsaMode mode : cfg.sweep_modes)
        for (long l : cfg.sweep_l) {
            specs.push_back(cli::model_spec(cfg, mode, l));
            warmup = std::max(warmup, cli::auto_warmup(cfg, specs.back()));
        }
    const auto reports =
        run_sweep(m.panel, m.prices, specs, cli::strategy_config(cfg), cli::account_config(cfg), warmup);
    const double secs = seconds_since(t0);

    std::printf("---- protocol run: %ld bars, 8 pairs, %.1f s\n", static_cast<long>(m.panel.rows()), secs);
    write_report_table(std::cout, reports);
    std::cout.flush();
    int ssa1 = 0, ssa2 = 0;
    std::string counts;
    for (const auto& r : reports) {
        (r.label == "SSA1" ? ssa1 : ssa2) += 1;
        counts += (counts.empty() ? "" : ",") + std::to_string(r.trade_count);
    }
    return {ssa1 == 4 && ssa2 == 4,
            std::to_string(ssa1) + " SSA1 + " + std::to_string(ssa2) + " SSA2 rows; trades per row " + counts +
                " on EURUSD (logged; reference 300-370 per year)"};
}

Outcome correlation_sanity()
{
    SyntheticMarket spec;
    spec.pairs = {"EURUSD", "GBPUSD", "AUDUSD", "NZDUSD"};
    spec.start_prices = {1.3, 1.6, 1.03, 0.82};
    spec.correlation = 0.7;
    spec.minutes = 5000;
    spec.seed = 17;
    const auto m = synthetic_market(spec, 1);
    double worst = 0.0;
    for (std::size_t window = 20; window <= 50; window += 5) {
        std::vector<double> values;
        for (Eigen::Index i = 0; i < 4; ++i)
            for (Eigen::Index j = i + 1; j < 4; ++j)
                for (const auto& v : rolling_correlation(m.panel, i, j, window))
                    if (v)
                        values.push_back(*v);
        std::nth_element(values.begin(), values.begin() + static_cast<long>(values.size() / 2), values.end());
        const double median = values[values.size() / 2];
        worst = std::max(worst, std::abs(median - 0.7));
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "worst |median - 0.7| over windows 20..50: %.3f", worst);
    return {worst <= 0.1, buf};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 eigensolver oracle equivalence", eigensolver_oracle},
        {"2 jacobi rotation faithfulness", jacobi_faithfulness},
        {"3 ssa exactness on rank-l data", ssa_rank_exactness},
        {"4 ssa2 degeneracy", ssa2_degeneracy},
        {"5 gradient correctness", gradient_correctness},
        {"6 backtest integrity", backtest_integrity},
        {"7 protocol-shape reproduction", protocol_shape},
        {"8 correlation sanity", correlation_sanity},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s [%s] %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
