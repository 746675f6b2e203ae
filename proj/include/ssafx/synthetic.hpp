#pragma once

// Correlated random-walk quote generator for tests, demos and protocol runs.

#include <ssafx/quotes.hpp>
#include <ssafx/random.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ssafx {

struct SyntheticMarket {
    std::vector<std::string> pairs;
    std::vector<double> start_prices;  ///< one per pair
    double volatility = 1e-4;          ///< per-minute log-return std
    double correlation = 0.7;          ///< common-factor correlation between every two pairs
    Timestamp start = 0;
    long minutes = 1000;
    int ticks_per_bar = 4;
    std::uint64_t seed = 1;
};

/// One-factor model: shock_i = sqrt(rho) * common + sqrt(1 - rho) * own_i, so
/// every pair of log-return series has correlation rho. Bars are formed from
/// `ticks_per_bar` sub-steps. Output is time-major, pairs in the given order.
inline std::vector<QuoteBar> generate_market(const SyntheticMarket& m)
{
    const std::size_t M = m.pairs.size();
    Rng rng(m.seed);
    std::vector<double> logp(M);
    for (std::size_t i = 0; i < M; ++i)
        logp[i] = std::log(i < m.start_prices.size() ? m.start_prices[i] : 1.0);
    const double tick_sd = m.volatility / std::sqrt(static_cast<double>(m.ticks_per_bar));
    const double a = std::sqrt(std::max(0.0, m.correlation));
    const double b = std::sqrt(std::max(0.0, 1.0 - m.correlation));

    std::vector<QuoteBar> bars;
    bars.reserve(M * static_cast<std::size_t>(m.minutes));
    std::vector<double> open(M), high(M), low(M);
    std::vector<double> own(M);
    for (long t = 0; t < m.minutes; ++t) {
        for (std::size_t i = 0; i < M; ++i)
            open[i] = high[i] = low[i] = std::exp(logp[i]);
        for (int k = 0; k < m.ticks_per_bar; ++k) {
            const double common = rng.normal();
            for (std::size_t i = 0; i < M; ++i)
                own[i] = rng.normal();
            for (std::size_t i = 0; i < M; ++i) {
                logp[i] += tick_sd * (a * common + b * own[i]);
                const double p = std::exp(logp[i]);
                high[i] = std::max(high[i], p);
                low[i] = std::min(low[i], p);
            }
        }
        for (std::size_t i = 0; i < M; ++i)
            bars.push_back(QuoteBar{m.pairs[i], m.start + t, open[i], high[i], low[i], std::exp(logp[i])});
    }
    return bars;
}

/// The eight pairs of the reference test, with plausible 2012-2013 levels.
inline SyntheticMarket reference_market(long minutes, std::uint64_t seed)
{
    SyntheticMarket m;
    m.pairs = {"EURUSD", "GBPUSD", "USDCHF", "USDJPY", "USDCAD", "AUDUSD", "NZDUSD", "EURAUD"};
    m.start_prices = {1.30, 1.60, 0.93, 98.0, 1.03, 1.03, 0.82, 1.26};
    m.minutes = minutes;
    m.seed = seed;
    return m;
}

} // namespace ssafx
