#pragma once

// Quote ingestion: OHLC bars -> weighted prices x_n -> aligned return panel y[n][i].

#include <ssafx/error.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ssafx {

using Timestamp = std::int64_t; // minutes since epoch

struct QuoteBar {
    std::string symbol;
    Timestamp timestamp = 0;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;

    bool valid() const noexcept
    {
        return open > 0.0 && high > 0.0 && low > 0.0 && close > 0.0 && std::isfinite(open) &&
               std::isfinite(high) && std::isfinite(low) && std::isfinite(close) &&
               low <= std::min(open, close) && high >= std::max(open, close);
    }
};

enum class PriceScheme { OHLC4, HLC3, HLCC4 };
enum class GapPolicy { DropRow, CarryForward };

struct PanelConfig {
    std::vector<std::string> pair_order;
    int timeframe_minutes = 1;
    int pre_average_p = 1;
    PriceScheme price_scheme = PriceScheme::OHLC4;
    GapPolicy gap_policy = GapPolicy::DropRow;

    /// Full invariant check (M >= 2). build_panel itself accepts a single pair.
    void validate() const
    {
        if (pair_order.size() < 2)
            throw Error(ErrorKind::BadConfig, "pair_order needs at least 2 pairs");
        validate_basic();
    }

    void validate_basic() const
    {
        if (pair_order.empty())
            throw Error(ErrorKind::BadConfig, "pair_order is empty");
        std::set<std::string> seen(pair_order.begin(), pair_order.end());
        if (seen.size() != pair_order.size())
            throw Error(ErrorKind::BadConfig, "pair identifiers must be unique");
        if (timeframe_minutes < 1)
            throw Error(ErrorKind::BadConfig, "timeframe_minutes must be >= 1");
        if (pre_average_p < 1)
            throw Error(ErrorKind::BadConfig, "pre_average_p must be >= 1");
    }
};

/// y(n, i): change of the weighted price of pair i ending at row n.
/// timestamps[n] is the time of the later price of the difference.
struct ReturnPanel {
    Eigen::MatrixXd y;
    std::vector<Timestamp> timestamps;
    std::vector<std::string> pair_order;

    Eigen::Index rows() const noexcept { return y.rows(); }
    Eigen::Index pairs() const noexcept { return y.cols(); }

    std::optional<Eigen::Index> pair_index(std::string_view pair) const
    {
        auto it = std::find(pair_order.begin(), pair_order.end(), pair);
        if (it == pair_order.end())
            return std::nullopt;
        return static_cast<Eigen::Index>(it - pair_order.begin());
    }
};

/// Weighted price levels x(n, i) on the surviving grid.
struct PriceTable {
    Eigen::MatrixXd x;
    std::vector<Timestamp> timestamps;
    std::vector<std::string> pair_order;
};

struct PanelBuild {
    ReturnPanel panel;
    PriceTable prices;
    std::size_t skipped_bars = 0;   // bars whose symbol is not in pair_order
    std::size_t dropped_rows = 0;   // grid points removed under DropRow
    std::size_t filled_cells = 0;   // pair prices carried forward under CarryForward
};

inline std::string_view to_string(PriceScheme s) noexcept
{
    switch (s) {
    case PriceScheme::OHLC4: return "OHLC4";
    case PriceScheme::HLC3: return "HLC3";
    case PriceScheme::HLCC4: return "HLCC4";
    }
    return "?";
}

inline std::string_view to_string(GapPolicy g) noexcept
{
    return g == GapPolicy::DropRow ? "DropRow" : "CarryForward";
}

inline double weighted_price(const QuoteBar& bar, PriceScheme scheme)
{
    if (!bar.valid())
        throw Error(ErrorKind::BadParams, "invalid bar for " + bar.symbol);
    switch (scheme) {
    case PriceScheme::OHLC4: return (bar.open + bar.high + bar.low + bar.close) / 4.0;
    case PriceScheme::HLC3: return (bar.high + bar.low + bar.close) / 3.0;
    case PriceScheme::HLCC4: return (bar.high + bar.low + 2.0 * bar.close) / 4.0;
    }
    return bar.close;
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',')
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out)
{
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// Parses `symbol,timestamp,open,high,low,close` lines. A leading header line
/// starting with "symbol" is optional; blank lines are ignored.
inline std::vector<QuoteBar> parse_quote_csv(std::istream& in)
{
    std::vector<QuoteBar> bars;
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty())
            continue;
        if (bars.empty() && line.substr(0, 6) == "symbol")
            continue;
        auto fields = detail::split(line);
        QuoteBar bar;
        bool ok = fields.size() == 6 && !fields[0].empty();
        if (ok) {
            bar.symbol = std::string(fields[0]);
            ok = detail::parse_number(fields[1], bar.timestamp) &&
                 detail::parse_number(fields[2], bar.open) && detail::parse_number(fields[3], bar.high) &&
                 detail::parse_number(fields[4], bar.low) && detail::parse_number(fields[5], bar.close) &&
                 bar.valid();
        }
        if (!ok)
            throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no), line_no);
        bars.push_back(std::move(bar));
    }
    if (bars.empty())
        throw Error(ErrorKind::EmptyInput, "no quote bars");
    return bars;
}

inline std::vector<QuoteBar> parse_quote_csv(std::string_view text)
{
    std::istringstream in{std::string(text)};
    return parse_quote_csv(in);
}

inline void write_quote_csv(std::ostream& out, const std::vector<QuoteBar>& bars)
{
    out << "symbol,timestamp,open,high,low,close\n";
    for (const auto& b : bars)
        out << b.symbol << ',' << b.timestamp << ',' << detail::format_double(b.open) << ','
            << detail::format_double(b.high) << ',' << detail::format_double(b.low) << ','
            << detail::format_double(b.close) << '\n';
}

/// Buckets bars to the timeframe grid, computes weighted prices, aligns pairs
/// on their common time range and differences consecutive surviving rows.
inline PanelBuild build_panel(const std::vector<QuoteBar>& bars, const PanelConfig& cfg)
{
    cfg.validate_basic();
    const auto M = cfg.pair_order.size();
    const Timestamp tf = cfg.timeframe_minutes;

    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t i = 0; i < M; ++i)
        index.emplace(cfg.pair_order[i], i);

    // Aggregated bar per (pair, bucket): first open, last close, extreme high/low.
    std::vector<std::map<Timestamp, QuoteBar>> buckets(M);
    PanelBuild result;
    for (const auto& bar : bars) {
        auto it = index.find(bar.symbol);
        if (it == index.end()) {
            ++result.skipped_bars;
            continue;
        }
        if (!bar.valid())
            throw Error(ErrorKind::BadParams, "invalid bar for " + bar.symbol);
        Timestamp bucket = (bar.timestamp >= 0 ? bar.timestamp / tf : (bar.timestamp - tf + 1) / tf) * tf;
        auto [slot, inserted] = buckets[it->second].try_emplace(bucket, bar);
        if (inserted) {
            slot->second.timestamp = bucket;
            continue;
        }
        QuoteBar& agg = slot->second;
        agg.high = std::max(agg.high, bar.high);
        agg.low = std::min(agg.low, bar.low);
        agg.close = bar.close;
    }

    Timestamp start = std::numeric_limits<Timestamp>::min();
    Timestamp end = std::numeric_limits<Timestamp>::max();
    for (std::size_t i = 0; i < M; ++i) {
        if (buckets[i].empty())
            throw Error(ErrorKind::NoOverlap, "no bars for pair " + cfg.pair_order[i]);
        start = std::max(start, buckets[i].begin()->first);
        end = std::min(end, buckets[i].rbegin()->first);
    }
    if (start > end)
        throw Error(ErrorKind::NoOverlap, "pairs share no common time range");

    std::vector<Timestamp> times;
    std::vector<std::vector<double>> levels;
    std::vector<double> row(M);
    for (Timestamp t = start; t <= end; t += tf) {
        bool complete = true;
        for (std::size_t i = 0; i < M && complete; ++i) {
            auto it = buckets[i].find(t);
            if (it != buckets[i].end()) {
                row[i] = weighted_price(it->second, cfg.price_scheme);
            } else if (cfg.gap_policy == GapPolicy::CarryForward) {
                auto prev = buckets[i].upper_bound(t);
                --prev; // start is >= every pair's first bucket
                row[i] = weighted_price(prev->second, cfg.price_scheme);
                ++result.filled_cells;
            } else {
                complete = false;
            }
        }
        if (!complete) {
            ++result.dropped_rows;
            continue;
        }
        times.push_back(t);
        levels.push_back(row);
    }
    if (times.size() < 2)
        throw Error(ErrorKind::NoOverlap, "fewer than two aligned price rows");

    const auto rows = static_cast<Eigen::Index>(times.size());
    PriceTable& prices = result.prices;
    prices.pair_order = cfg.pair_order;
    prices.timestamps = times;
    prices.x.resize(rows, static_cast<Eigen::Index>(M));
    for (Eigen::Index n = 0; n < rows; ++n)
        for (std::size_t i = 0; i < M; ++i)
            prices.x(n, static_cast<Eigen::Index>(i)) = levels[static_cast<std::size_t>(n)][i];

    ReturnPanel& panel = result.panel;
    panel.pair_order = cfg.pair_order;
    panel.timestamps.assign(times.begin() + 1, times.end());
    panel.y = prices.x.bottomRows(rows - 1) - prices.x.topRows(rows - 1);
    return result;
}

/// Trailing simple moving average of width p applied to every column.
inline ReturnPanel smooth_panel(const ReturnPanel& panel, int p)
{
    if (p < 1)
        throw Error(ErrorKind::BadParams, "p must be >= 1");
    if (panel.rows() < p)
        throw Error(ErrorKind::TooShort, "panel has " + std::to_string(panel.rows()) + " rows, p = " +
                                             std::to_string(p));
    if (p == 1)
        return panel;
    const Eigen::Index out_rows = panel.rows() - p + 1;
    ReturnPanel out;
    out.pair_order = panel.pair_order;
    out.timestamps.assign(panel.timestamps.begin() + (p - 1), panel.timestamps.end());
    out.y.resize(out_rows, panel.pairs());
    for (Eigen::Index n = 0; n < out_rows; ++n)
        out.y.row(n) = panel.y.middleRows(n, p).colwise().sum() / static_cast<double>(p);
    return out;
}

/// Price rows matching each panel row's timestamp.
inline Eigen::MatrixXd align_prices(const PriceTable& prices, const ReturnPanel& panel)
{
    Eigen::MatrixXd out(panel.rows(), panel.pairs());
    std::size_t j = 0;
    for (Eigen::Index n = 0; n < panel.rows(); ++n) {
        const Timestamp t = panel.timestamps[static_cast<std::size_t>(n)];
        while (j < prices.timestamps.size() && prices.timestamps[j] < t)
            ++j;
        if (j == prices.timestamps.size() || prices.timestamps[j] != t)
            throw Error(ErrorKind::InsufficientData, "no price row at timestamp " + std::to_string(t));
        out.row(n) = prices.x.row(static_cast<Eigen::Index>(j));
    }
    return out;
}

/// Pearson correlation of columns i and j over each trailing window; element k
/// covers rows [k, k + window). nullopt where either window has zero variance.
inline std::vector<std::optional<double>>
rolling_correlation(const ReturnPanel& panel, Eigen::Index i, Eigen::Index j, Eigen::Index window)
{
    if (i == j || i < 0 || j < 0 || i >= panel.pairs() || j >= panel.pairs())
        throw Error(ErrorKind::BadWindow, "pair indices must be distinct and in range");
    if (window < 2 || window > panel.rows())
        throw Error(ErrorKind::BadWindow, "window must be in [2, rows]");
    std::vector<std::optional<double>> out;
    out.reserve(static_cast<std::size_t>(panel.rows() - window + 1));
    for (Eigen::Index start = 0; start + window <= panel.rows(); ++start) {
        const Eigen::ArrayXd a = panel.y.col(i).segment(start, window).array();
        const Eigen::ArrayXd b = panel.y.col(j).segment(start, window).array();
        const Eigen::ArrayXd da = a - a.mean();
        const Eigen::ArrayXd db = b - b.mean();
        const double saa = da.square().sum();
        const double sbb = db.square().sum();
        if (saa <= 0.0 || sbb <= 0.0) {
            out.emplace_back(std::nullopt);
            continue;
        }
        out.emplace_back(std::clamp((da * db).sum() / std::sqrt(saa * sbb), -1.0, 1.0));
    }
    return out;
}

inline void write_panel_csv(std::ostream& out, const ReturnPanel& panel)
{
    out << "timestamp";
    for (const auto& p : panel.pair_order)
        out << ',' << p;
    out << '\n';
    for (Eigen::Index n = 0; n < panel.rows(); ++n) {
        out << panel.timestamps[static_cast<std::size_t>(n)];
        for (Eigen::Index i = 0; i < panel.pairs(); ++i)
            out << ',' << detail::format_double(panel.y(n, i));
        out << '\n';
    }
}

inline ReturnPanel read_panel_csv(std::istream& in)
{
    std::string raw;
    if (!std::getline(in, raw))
        throw Error(ErrorKind::EmptyInput, "empty panel file");
    auto header = detail::split(detail::trim(raw));
    if (header.size() < 2 || header[0] != "timestamp")
        throw Error(ErrorKind::MalformedLine, "bad panel header", 1);
    ReturnPanel panel;
    for (std::size_t k = 1; k < header.size(); ++k)
        panel.pair_order.emplace_back(header[k]);
    std::vector<double> values;
    long line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty())
            continue;
        auto fields = detail::split(line);
        Timestamp t = 0;
        if (fields.size() != header.size() || !detail::parse_number(fields[0], t))
            throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no), line_no);
        for (std::size_t k = 1; k < fields.size(); ++k) {
            double v = 0.0;
            if (!detail::parse_number(fields[k], v) || !std::isfinite(v))
                throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no), line_no);
            values.push_back(v);
        }
        if (!panel.timestamps.empty() && t <= panel.timestamps.back())
            throw Error(ErrorKind::MalformedLine, "timestamps must increase", line_no);
        panel.timestamps.push_back(t);
    }
    if (panel.timestamps.empty())
        throw Error(ErrorKind::EmptyInput, "panel has no rows");
    const auto cols = static_cast<Eigen::Index>(panel.pair_order.size());
    panel.y = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Eigen::Index>(panel.timestamps.size()), cols);
    return panel;
}

} // namespace ssafx
