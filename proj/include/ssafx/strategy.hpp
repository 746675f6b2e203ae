#pragma once

// Forecast -> trade signal -> order intent.

#include <ssafx/error.hpp>
#include <ssafx/quotes.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ssafx {

enum class Direction { Flat, Long, Short };
enum class ExitRule { ReverseOnOppositeSignal, FlatOnWeakSignal };
enum class Action { Hold, OpenLong, OpenShort, Close };

inline std::string_view to_string(Direction d) noexcept
{
    switch (d) {
    case Direction::Long: return "Long";
    case Direction::Short: return "Short";
    case Direction::Flat: return "Flat";
    }
    return "?";
}

inline std::string_view to_string(ExitRule r) noexcept
{
    return r == ExitRule::ReverseOnOppositeSignal ? "ReverseOnOppositeSignal" : "FlatOnWeakSignal";
}

inline std::string_view to_string(Action a) noexcept
{
    switch (a) {
    case Action::Hold: return "Hold";
    case Action::OpenLong: return "OpenLong";
    case Action::OpenShort: return "OpenShort";
    case Action::Close: return "Close";
    }
    return "?";
}

inline int sign(Direction d) noexcept { return d == Direction::Long ? 1 : d == Direction::Short ? -1 : 0; }

struct Signal {
    std::string pair;
    Direction direction = Direction::Flat;
    double forecast_value = 0.0;
};

struct StrategyConfig {
    double entry_threshold = 0.0;
    ExitRule exit_rule = ExitRule::ReverseOnOppositeSignal;
    std::map<std::string, double, std::less<>> spread_per_pair;
    std::vector<std::string> traded_pairs;

    double spread(std::string_view pair) const
    {
        auto it = spread_per_pair.find(pair);
        return it == spread_per_pair.end() ? 0.0 : it->second;
    }

    void validate(const std::vector<std::string>& panel_pairs) const
    {
        if (!(entry_threshold >= 0.0))
            throw Error(ErrorKind::BadConfig, "entry_threshold must be >= 0");
        if (traded_pairs.empty())
            throw Error(ErrorKind::BadConfig, "traded_pairs is empty");
        for (const auto& p : traded_pairs)
            if (std::find(panel_pairs.begin(), panel_pairs.end(), p) == panel_pairs.end())
                throw Error(ErrorKind::BadConfig, "traded pair " + p + " not in panel");
        for (const auto& [p, s] : spread_per_pair)
            if (!(s >= 0.0))
                throw Error(ErrorKind::BadConfig, "negative spread for " + p);
    }
};

/// Long above entry_threshold + spread/2, Short below its negative, else Flat.
/// `forecast[i]` belongs to `pair_order[i]`.
inline std::vector<Signal> generate_signals(const Eigen::Ref<const Eigen::VectorXd>& forecast,
                                            const std::vector<std::string>& pair_order, const StrategyConfig& cfg)
{
    std::vector<Signal> out;
    out.reserve(cfg.traded_pairs.size());
    for (const auto& pair : cfg.traded_pairs) {
        auto it = std::find(pair_order.begin(), pair_order.end(), pair);
        const auto idx = static_cast<Eigen::Index>(it - pair_order.begin());
        if (it == pair_order.end() || idx >= forecast.size())
            throw Error(ErrorKind::MissingForecast, pair);
        const double f = forecast[idx];
        const double band = cfg.entry_threshold + 0.5 * cfg.spread(pair);
        Direction dir = Direction::Flat;
        if (f > band)
            dir = Direction::Long;
        else if (f < -band)
            dir = Direction::Short;
        out.push_back(Signal{pair, dir, f});
    }
    return out;
}

/// Order actions for one pair, executed in sequence. `current` is the open
/// position direction (Flat when none).
inline std::vector<Action> next_position(Direction current, const Signal& signal, const StrategyConfig& cfg)
{
    const Direction want = signal.direction;
    if (want == Direction::Flat) {
        if (current != Direction::Flat && cfg.exit_rule == ExitRule::FlatOnWeakSignal)
            return {Action::Close};
        return {Action::Hold};
    }
    const Action open = want == Direction::Long ? Action::OpenLong : Action::OpenShort;
    if (current == Direction::Flat)
        return {open};
    if (current == want)
        return {Action::Hold};
    return {Action::Close, open};
}

inline void write_signal_header(std::ostream& out) { out << "timestamp,pair,direction,forecast_value\n"; }

inline void write_signal_row(std::ostream& out, Timestamp t, const Signal& s)
{
    out << t << ',' << s.pair << ',' << to_string(s.direction) << ',' << detail::format_double(s.forecast_value)
        << '\n';
}

} // namespace ssafx
