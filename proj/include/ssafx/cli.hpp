#pragma once

// Command-line front end: key=value run configs and the ingest / forecast /
// backtest / sweep / report commands. Exit codes: 0 ok, 1 pipeline error,
// 2 usage or I/O error.

#include <ssafx/backtest.hpp>
#include <ssafx/error.hpp>
#include <ssafx/nonlinear.hpp>
#include <ssafx/quotes.hpp>
#include <ssafx/ssa.hpp>
#include <ssafx/strategy.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ssafx::cli {

enum ExitCode : int { Ok = 0, PipelineError = 1, UsageError = 2 };

struct DateRange {
    Timestamp start = std::numeric_limits<Timestamp>::min();
    Timestamp end = std::numeric_limits<Timestamp>::max();
    std::string text = "all";

    bool contains(Timestamp t) const noexcept { return t >= start && t <= end; }
};

struct RunConfig {
    std::string quotes_path;
    std::string panel_path;
    std::vector<std::string> pair_order;
    DateRange date_range;
    int timeframe_minutes = 1;
    PriceScheme price_scheme = PriceScheme::OHLC4;
    GapPolicy gap_policy = GapPolicy::DropRow;
    int pre_average_p = 5;

    SsaMode mode = SsaMode::SSA1;
    long k = 4;
    long l = 1;
    long n = 3;
    long i = 2;
    long history_rows = 1;
    ForecastRule forecast_rule = ForecastRule::Projector;
    double jacobi_epsilon = 0.001;
    StopMode jacobi_stop = StopMode::Relative;
    int max_sweeps = 100;

    std::string nonlinear = "off";
    std::string ssa2_nonlinear; // empty: same as nonlinear
    int calibration_window = 256;
    int refit_every = 1440;
    int epochs = 200;
    double learning_rate = 0.05;
    double l2_penalty = 0.0;
    Activation activation = Activation::Tanh;

    double entry_threshold = 0.0;
    ExitRule exit_rule = ExitRule::ReverseOnOppositeSignal;
    std::map<std::string, double, std::less<>> spread_per_pair;
    std::vector<std::string> traded_pairs;

    double initial_deposit = 10000.0;
    int leverage = 100;
    double lot_fraction = 0.1;
    double margin_call_level = 0.0;

    std::uint64_t seed = 42;
    long warmup = -1; // -1: derived from the model
    std::vector<long> sweep_l{1, 2, 3, 4};
    std::vector<SsaMode> sweep_modes{SsaMode::SSA1, SsaMode::SSA2};
    std::string output_dir = "out";
};

namespace detail {

inline std::string lower(std::string s)
{
    for (auto& c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::string fmt(double v) { return ssafx::detail::format_double(v); }

template <typename T>
T number(const std::string& key, std::string_view text)
{
    T v{};
    if (!ssafx::detail::parse_number(ssafx::detail::trim(text), v))
        throw Error(ErrorKind::BadConfig, key + ": not a number: '" + std::string(text) + "'");
    return v;
}

inline std::vector<std::string> list(std::string_view text)
{
    std::vector<std::string> out;
    if (ssafx::detail::trim(text).empty())
        return out;
    for (auto part : ssafx::detail::split(text))
        if (!part.empty())
            out.emplace_back(part);
    return out;
}

inline Timestamp epoch_minutes(int y, unsigned m, unsigned d)
{
    using namespace std::chrono;
    const sys_days day = year_month_day{year{y}, month{m}, std::chrono::day{d}};
    return duration_cast<minutes>(day.time_since_epoch()).count();
}

inline DateRange parse_date_range(const std::string& text)
{
    DateRange r;
    r.text = text;
    const auto t = lower(text);
    if (t == "all" || t.empty())
        return r;
    // Preset: 1 Sep 2013 .. 29 Sep 2013.
    if (t == "sep2013") {
        r.start = epoch_minutes(2013, 9, 1);
        r.end = epoch_minutes(2013, 9, 30) - 1;
        return r;
    }
    // Preset: 30 Sep 2012 .. 30 Sep 2013.
    if (t == "year") {
        r.start = epoch_minutes(2012, 9, 30);
        r.end = epoch_minutes(2013, 10, 1) - 1;
        return r;
    }
    auto colon = text.find(':');
    if (colon == std::string::npos)
        throw Error(ErrorKind::BadConfig, "date_range must be all, sep2013, year or start:end");
    r.start = number<Timestamp>("date_range", std::string_view(text).substr(0, colon));
    r.end = number<Timestamp>("date_range", std::string_view(text).substr(colon + 1));
    if (r.start > r.end)
        throw Error(ErrorKind::BadConfig, "date_range start after end");
    return r;
}

inline SsaMode parse_mode(const std::string& v)
{
    const auto t = lower(v);
    if (t == "ssa1")
        return SsaMode::SSA1;
    if (t == "ssa2")
        return SsaMode::SSA2;
    throw Error(ErrorKind::BadConfig, "mode must be SSA1 or SSA2");
}

} // namespace detail

/// Parsed form of the `nonlinear` key: off | poly:<degree> | mlp:<T>,<width>.
inline NonlinearSpec parse_nonlinear(const std::string& text, const RunConfig& cfg)
{
    NonlinearSpec spec;
    spec.calibration_window = cfg.calibration_window;
    spec.refit_every = cfg.refit_every;
    spec.activation = cfg.activation;
    spec.train.epochs = cfg.epochs;
    spec.train.learning_rate = cfg.learning_rate;
    spec.train.l2_penalty = cfg.l2_penalty;
    spec.train.seed = cfg.seed;
    const auto t = detail::lower(text);
    if (t == "off" || t.empty())
        return spec;
    if (t.rfind("poly:", 0) == 0) {
        spec.kind = NonlinearKind::Poly;
        spec.degree = detail::number<int>("nonlinear", std::string_view(t).substr(5));
        if (spec.degree < 1)
            throw Error(ErrorKind::BadConfig, "nonlinear poly degree must be >= 1");
        return spec;
    }
    if (t.rfind("mlp:", 0) == 0) {
        auto parts = detail::list(std::string_view(t).substr(4));
        if (parts.size() != 2)
            throw Error(ErrorKind::BadConfig, "nonlinear mlp expects mlp:<T>,<width>");
        spec.kind = NonlinearKind::Mlp;
        spec.hidden_layers = detail::number<int>("nonlinear", parts[0]);
        spec.width = detail::number<int>("nonlinear", parts[1]);
        if (spec.hidden_layers < 2 || spec.hidden_layers > 9)
            throw Error(ErrorKind::BadConfig, "mlp hidden layers T must satisfy 1 < T < 10");
        if (spec.width < 1)
            throw Error(ErrorKind::BadConfig, "mlp width must be >= 1");
        return spec;
    }
    throw Error(ErrorKind::BadConfig, "nonlinear must be off, poly:<d> or mlp:<T>,<w>");
}

inline void set_key(RunConfig& c, const std::string& raw_key, const std::string& value)
{
    const std::string key = detail::lower(raw_key);
    auto lst = [&] { return detail::list(value); };
    if (key == "quotes_path") c.quotes_path = value;
    else if (key == "panel_path") c.panel_path = value;
    else if (key == "pair_order") c.pair_order = lst();
    else if (key == "date_range") c.date_range = detail::parse_date_range(value);
    else if (key == "timeframe_minutes") c.timeframe_minutes = detail::number<int>(key, value);
    else if (key == "price_scheme") {
        const auto v = detail::lower(value);
        if (v == "ohlc4") c.price_scheme = PriceScheme::OHLC4;
        else if (v == "hlc3") c.price_scheme = PriceScheme::HLC3;
        else if (v == "hlcc4") c.price_scheme = PriceScheme::HLCC4;
        else throw Error(ErrorKind::BadConfig, "price_scheme must be OHLC4, HLC3 or HLCC4");
    }
    else if (key == "gap_policy") {
        const auto v = detail::lower(value);
        if (v == "droprow") c.gap_policy = GapPolicy::DropRow;
        else if (v == "carryforward") c.gap_policy = GapPolicy::CarryForward;
        else throw Error(ErrorKind::BadConfig, "gap_policy must be DropRow or CarryForward");
    }
    else if (key == "pre_average_p") c.pre_average_p = detail::number<int>(key, value);
    else if (key == "mode") c.mode = detail::parse_mode(value);
    else if (key == "k") c.k = detail::number<long>(key, value);
    else if (key == "l") c.l = detail::number<long>(key, value);
    else if (key == "n") c.n = detail::number<long>(key, value);
    else if (key == "i") c.i = detail::number<long>(key, value);
    else if (key == "history_rows") c.history_rows = detail::number<long>(key, value);
    else if (key == "forecast_rule") {
        const auto v = detail::lower(value);
        if (v == "projector") c.forecast_rule = ForecastRule::Projector;
        else if (v == "paperliteral" || v == "paper_literal") c.forecast_rule = ForecastRule::PaperLiteral;
        else throw Error(ErrorKind::BadConfig, "forecast_rule must be Projector or PaperLiteral");
    }
    else if (key == "jacobi_epsilon") c.jacobi_epsilon = detail::number<double>(key, value);
    else if (key == "jacobi_stop") {
        const auto v = detail::lower(value);
        if (v == "absolute") c.jacobi_stop = StopMode::Absolute;
        else if (v == "relative") c.jacobi_stop = StopMode::Relative;
        else throw Error(ErrorKind::BadConfig, "jacobi_stop must be absolute or relative");
    }
    else if (key == "max_sweeps") c.max_sweeps = detail::number<int>(key, value);
    else if (key == "nonlinear") c.nonlinear = value;
    else if (key == "ssa2_nonlinear") c.ssa2_nonlinear = value;
    else if (key == "calibration_window") c.calibration_window = detail::number<int>(key, value);
    else if (key == "refit_every") c.refit_every = detail::number<int>(key, value);
    else if (key == "epochs") c.epochs = detail::number<int>(key, value);
    else if (key == "learning_rate") c.learning_rate = detail::number<double>(key, value);
    else if (key == "l2_penalty") c.l2_penalty = detail::number<double>(key, value);
    else if (key == "activation") {
        const auto v = detail::lower(value);
        if (v == "tanh") c.activation = Activation::Tanh;
        else if (v == "sigmoid") c.activation = Activation::Sigmoid;
        else throw Error(ErrorKind::BadConfig, "activation must be Tanh or Sigmoid");
    }
    else if (key == "entry_threshold") c.entry_threshold = detail::number<double>(key, value);
    else if (key == "exit_rule") {
        const auto v = detail::lower(value);
        if (v == "reverseonoppositesignal") c.exit_rule = ExitRule::ReverseOnOppositeSignal;
        else if (v == "flatonweaksignal") c.exit_rule = ExitRule::FlatOnWeakSignal;
        else throw Error(ErrorKind::BadConfig, "exit_rule must be ReverseOnOppositeSignal or FlatOnWeakSignal");
    }
    else if (key == "spread_per_pair") {
        c.spread_per_pair.clear();
        for (const auto& item : lst()) {
            auto colon = item.find(':');
            if (colon == std::string::npos)
                throw Error(ErrorKind::BadConfig, "spread_per_pair items are PAIR:value");
            c.spread_per_pair[item.substr(0, colon)] =
                detail::number<double>(key, std::string_view(item).substr(colon + 1));
        }
    }
    else if (key == "traded_pairs") c.traded_pairs = lst();
    else if (key == "initial_deposit") c.initial_deposit = detail::number<double>(key, value);
    else if (key == "leverage") c.leverage = detail::number<int>(key, value);
    else if (key == "lot_fraction") c.lot_fraction = detail::number<double>(key, value);
    else if (key == "margin_call_level") c.margin_call_level = detail::number<double>(key, value);
    else if (key == "seed") c.seed = detail::number<std::uint64_t>(key, value);
    else if (key == "warmup") c.warmup = detail::lower(value) == "auto" ? -1 : detail::number<long>(key, value);
    else if (key == "sweep_l") {
        c.sweep_l.clear();
        for (const auto& v : lst())
            c.sweep_l.push_back(detail::number<long>(key, v));
    }
    else if (key == "sweep_modes") {
        c.sweep_modes.clear();
        for (const auto& v : lst())
            c.sweep_modes.push_back(detail::parse_mode(v));
    }
    else if (key == "output_dir") c.output_dir = value;
    else throw Error(ErrorKind::BadConfig, "unknown key '" + raw_key + "'");
}

/// One `key = value` per line; `#` starts a comment.
inline RunConfig parse_run_config(std::istream& in)
{
    RunConfig cfg;
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string::npos)
            raw.erase(hash);
        auto line = ssafx::detail::trim(raw);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": expected key = value", line_no);
        try {
            set_key(cfg, std::string(ssafx::detail::trim(line.substr(0, eq))),
                    std::string(ssafx::detail::trim(line.substr(eq + 1))));
        } catch (const Error& e) {
            throw Error(ErrorKind::BadConfig, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
    }
    return cfg;
}

inline std::vector<std::string> effective_traded_pairs(const RunConfig& c)
{
    if (!c.traded_pairs.empty())
        return c.traded_pairs;
    if (c.pair_order.empty())
        return {};
    return {c.pair_order.front()};
}

inline std::string nonlinear_for(const RunConfig& c, SsaMode mode)
{
    return mode == SsaMode::SSA2 && !c.ssa2_nonlinear.empty() ? c.ssa2_nonlinear : c.nonlinear;
}

inline void write_run_config(std::ostream& out, const RunConfig& c)
{
    auto join = [](const auto& items, auto&& f) {
        std::string s;
        for (const auto& x : items)
            s += (s.empty() ? "" : ",") + f(x);
        return s;
    };
    auto id = [](const std::string& s) { return s; };
    out << "# resolved run configuration\n";
    out << "quotes_path = " << c.quotes_path << "\n";
    out << "panel_path = " << c.panel_path << "\n";
    out << "pair_order = " << join(c.pair_order, id) << "\n";
    if (c.date_range.text == "all" || detail::lower(c.date_range.text) == "sep2013" ||
        detail::lower(c.date_range.text) == "year")
        out << "date_range = " << c.date_range.text << "\n";
    else
        out << "date_range = " << c.date_range.start << ":" << c.date_range.end << "\n";
    out << "timeframe_minutes = " << c.timeframe_minutes << "\n";
    out << "price_scheme = " << to_string(c.price_scheme) << "\n";
    out << "gap_policy = " << to_string(c.gap_policy) << "\n";
    out << "pre_average_p = " << c.pre_average_p << "\n";
    out << "mode = " << to_string(c.mode) << "\n";
    out << "k = " << c.k << "\nl = " << c.l << "\nn = " << c.n << "\ni = " << c.i << "\n";
    out << "history_rows = " << c.history_rows << "\n";
    out << "forecast_rule = " << to_string(c.forecast_rule) << "\n";
    out << "jacobi_epsilon = " << detail::fmt(c.jacobi_epsilon) << "\n";
    out << "jacobi_stop = " << (c.jacobi_stop == StopMode::Absolute ? "absolute" : "relative") << "\n";
    out << "max_sweeps = " << c.max_sweeps << "\n";
    out << "nonlinear = " << c.nonlinear << "\n";
    out << "ssa2_nonlinear = " << c.ssa2_nonlinear << "\n";
    out << "calibration_window = " << c.calibration_window << "\n";
    out << "refit_every = " << c.refit_every << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "learning_rate = " << detail::fmt(c.learning_rate) << "\n";
    out << "l2_penalty = " << detail::fmt(c.l2_penalty) << "\n";
    out << "activation = " << to_string(c.activation) << "\n";
    out << "entry_threshold = " << detail::fmt(c.entry_threshold) << "\n";
    out << "exit_rule = " << to_string(c.exit_rule) << "\n";
    out << "spread_per_pair = "
        << join(c.spread_per_pair, [](const auto& kv) { return kv.first + ":" + detail::fmt(kv.second); }) << "\n";
    out << "traded_pairs = " << join(c.traded_pairs, id) << "\n";
    out << "initial_deposit = " << detail::fmt(c.initial_deposit) << "\n";
    out << "leverage = " << c.leverage << "\n";
    out << "lot_fraction = " << detail::fmt(c.lot_fraction) << "\n";
    out << "margin_call_level = " << detail::fmt(c.margin_call_level) << "\n";
    out << "seed = " << c.seed << "\n";
    out << "warmup = " << (c.warmup < 0 ? std::string("auto") : std::to_string(c.warmup)) << "\n";
    out << "sweep_l = " << join(c.sweep_l, [](long v) { return std::to_string(v); }) << "\n";
    out << "sweep_modes = " << join(c.sweep_modes, [](SsaMode m) { return std::string(to_string(m)); }) << "\n";
    out << "output_dir = " << c.output_dir << "\n";
}

inline PanelConfig panel_config(const RunConfig& c)
{
    PanelConfig p;
    p.pair_order = c.pair_order;
    p.timeframe_minutes = c.timeframe_minutes;
    p.pre_average_p = c.pre_average_p;
    p.price_scheme = c.price_scheme;
    p.gap_policy = c.gap_policy;
    return p;
}

inline ModelSpec model_spec(const RunConfig& c, SsaMode mode, long l)
{
    ModelSpec spec;
    spec.fit.mode = mode;
    spec.fit.K = c.k;
    spec.fit.l = l;
    spec.fit.N = c.n;
    spec.fit.I = c.i;
    spec.fit.rule = c.forecast_rule;
    spec.fit.history_rows = c.history_rows;
    spec.fit.jacobi.epsilon = c.jacobi_epsilon;
    spec.fit.jacobi.stop = c.jacobi_stop;
    spec.fit.jacobi.max_sweeps = c.max_sweeps;
    spec.nonlinear = parse_nonlinear(nonlinear_for(c, mode), c);
    return spec;
}

inline StrategyConfig strategy_config(const RunConfig& c)
{
    StrategyConfig s;
    s.entry_threshold = c.entry_threshold;
    s.exit_rule = c.exit_rule;
    s.spread_per_pair = c.spread_per_pair;
    s.traded_pairs = effective_traded_pairs(c);
    return s;
}

inline AccountConfig account_config(const RunConfig& c)
{
    AccountConfig a;
    a.initial_deposit = c.initial_deposit;
    a.leverage = c.leverage;
    a.lot_fraction = c.lot_fraction;
    a.margin_call_level = c.margin_call_level;
    return a;
}

/// Bounds checks that need no data. Throws BadConfig. The sweep grid is only
/// checked when `sweep` is set.
inline void validate(const RunConfig& c, bool needs_quotes = true, bool sweep = false)
{
    if (needs_quotes && c.quotes_path.empty() && c.panel_path.empty())
        throw Error(ErrorKind::BadConfig, "quotes_path is required");
    panel_config(c).validate();
    const auto M = static_cast<long>(c.pair_order.size());
    if (c.k < 1 || c.k >= M)
        throw Error(ErrorKind::BadConfig, "k must satisfy 1 <= k < M");
    const long order1 = M - c.k + 1;
    auto check_l = [&](long l, SsaMode mode) {
        const long order = mode == SsaMode::SSA1 ? order1 : order1 * (c.n - c.i + 1);
        if (l < 1 || l > order)
            throw Error(ErrorKind::BadConfig,
                        "l = " + std::to_string(l) + " outside [1, " + std::to_string(order) + "]");
    };
    if (c.n < 1 || c.i < 1 || (c.n > 1 && c.i >= c.n) || (c.n == 1 && c.i != 1))
        throw Error(ErrorKind::BadConfig, "need 1 <= i < n (or n = i = 1)");
    check_l(c.l, c.mode);
    if (sweep) {
        if (c.sweep_l.empty() || c.sweep_modes.empty())
            throw Error(ErrorKind::BadConfig, "sweep_l and sweep_modes must be non-empty");
        for (long l : c.sweep_l)
            for (SsaMode m : c.sweep_modes)
                check_l(l, m);
    }
    if (c.history_rows < 1)
        throw Error(ErrorKind::BadConfig, "history_rows must be >= 1");
    JacobiConfig{c.jacobi_epsilon, c.max_sweeps, c.jacobi_stop}.validate();
    for (SsaMode m : {SsaMode::SSA1, SsaMode::SSA2}) {
        const auto nl = parse_nonlinear(nonlinear_for(c, m), c);
        nl.train.validate();
        if (nl.kind != NonlinearKind::Off && (nl.calibration_window < 2 || nl.refit_every < 1))
            throw Error(ErrorKind::BadConfig, "calibration_window >= 2 and refit_every >= 1 required");
    }
    account_config(c).validate();
    auto s = strategy_config(c);
    s.validate(c.pair_order);
}

inline long auto_warmup(const RunConfig& c, const ModelSpec& spec)
{
    if (c.warmup >= 0)
        return c.warmup;
    long w = static_cast<long>(spec.fit.min_history()) - 1;
    if (spec.nonlinear.kind != NonlinearKind::Off)
        w += spec.nonlinear.calibration_window;
    return w;
}

// ---------------------------------------------------------------- commands

struct Context {
    RunConfig cfg;
    std::filesystem::path out_dir;
    bool verbose = false;
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;
};

/// I/O failures map to exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream f(p);
    if (!f)
        throw IoError("cannot write " + p.string());
    f.precision(17);
    return f;
}

struct LoadedData {
    PanelBuild build;
    ReturnPanel panel; // after pre-averaging
    Eigen::MatrixXd prices;
};

inline LoadedData load_data(const Context& ctx)
{
    const auto& c = ctx.cfg;
    std::ifstream in(c.quotes_path);
    if (!in)
        throw IoError("NotFound: " + c.quotes_path);
    std::vector<QuoteBar> bars;
    try {
        bars = parse_quote_csv(in);
    } catch (const Error& e) {
        throw Error(e.kind(), c.quotes_path + ": " + e.what(), e.where());
    }
    std::erase_if(bars, [&](const QuoteBar& b) { return !c.date_range.contains(b.timestamp); });
    if (bars.empty())
        throw Error(ErrorKind::EmptyInput, "no bars inside date_range " + c.date_range.text);
    LoadedData d;
    d.build = build_panel(bars, panel_config(c));
    d.panel = smooth_panel(d.build.panel, c.pre_average_p);
    d.prices = align_prices(d.build.prices, d.panel);
    return d;
}

inline void echo_config(const Context& ctx)
{
    std::filesystem::create_directories(ctx.out_dir);
    auto f = open_out(ctx.out_dir / "config_echo.txt");
    RunConfig c = ctx.cfg;
    c.output_dir = ctx.out_dir.string();
    write_run_config(f, c);
}

inline int cmd_ingest(const Context& ctx)
{
    const auto d = load_data(ctx);
    echo_config(ctx);
    {
        auto f = open_out(ctx.out_dir / "panel.csv");
        write_panel_csv(f, d.panel);
    }
    auto& o = *ctx.out;
    o << "pairs M = " << d.panel.pairs() << " (";
    for (std::size_t k = 0; k < d.panel.pair_order.size(); ++k)
        o << (k ? "," : "") << d.panel.pair_order[k];
    o << ")\n";
    o << "price rows = " << d.build.prices.x.rows() << "\n";
    o << "return rows = " << d.build.panel.rows() << "\n";
    o << "smoothed rows (p = " << ctx.cfg.pre_average_p << ") = " << d.panel.rows() << "\n";
    o << "first timestamp = " << d.panel.timestamps.front() << "\n";
    o << "last timestamp = " << d.panel.timestamps.back() << "\n";
    o << "skipped bars (unknown pair) = " << d.build.skipped_bars << "\n";
    o << "dropped rows (gaps) = " << d.build.dropped_rows << "\n";
    o << "carried-forward cells = " << d.build.filled_cells << "\n";
    o << "panel written to " << (ctx.out_dir / "panel.csv").string() << "\n";
    return Ok;
}

inline int cmd_forecast(const Context& ctx)
{
    const auto& c = ctx.cfg;
    ReturnPanel panel;
    if (!c.panel_path.empty()) {
        std::ifstream in(c.panel_path);
        if (!in)
            throw IoError("NotFound: " + c.panel_path);
        panel = read_panel_csv(in);
        if (panel.pair_order != c.pair_order)
            throw Error(ErrorKind::BadConfig, "panel columns differ from pair_order");
    } else {
        panel = load_data(ctx).panel;
    }
    const ModelSpec spec = model_spec(c, c.mode, c.l);
    const Eigen::Index t = panel.rows() - 1;
    if (t < spec.fit.min_history() - 1)
        throw Error(ErrorKind::InsufficientHistory,
                    "panel has " + std::to_string(panel.rows()) + " rows, model needs " +
                        std::to_string(spec.fit.min_history()));
    SsaForecaster model(spec);
    const Eigen::VectorXd fc = model(panel, t);

    StrategyConfig s = strategy_config(c);
    s.traded_pairs = panel.pair_order;
    const auto signals = generate_signals(fc, panel.pair_order, s);
    auto& o = *ctx.out;
    o << "forecast at timestamp " << panel.timestamps.back() << " (" << to_string(spec.fit.mode) << ", l = " << c.l
      << ", " << to_string(c.forecast_rule) << ")\n";
    for (const auto& sig : signals) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-8s %+.10e %s\n", sig.pair.c_str(), sig.forecast_value,
                      std::string(to_string(sig.direction)).c_str());
        o << buf;
    }
    if (ctx.verbose) {
        o << "--- model\n";
        dump_model(o, fit(panel, t, spec.fit));
    }
    return Ok;
}

inline void write_summary(std::ostream& f, const std::vector<BacktestReport>& reports)
{
    f << "mode,l,profit,sharpe,drawdown,trades\n";
    for (const auto& r : reports)
        f << r.label << ',' << r.l << ',' << detail::fmt(r.profit_P) << ','
          << (r.sharpe_Sh ? detail::fmt(*r.sharpe_Sh) : std::string("nan")) << ',' << detail::fmt(r.drawdown_D)
          << ',' << r.trade_count << '\n';
}

inline void write_run_outputs(const Context& ctx, const std::vector<BacktestReport>& reports, bool per_cell_names)
{
    {
        auto f = open_out(ctx.out_dir / "report.txt");
        write_report_table(f, reports);
        for (const auto& r : reports)
            for (const auto& n : r.notes)
                f << "# " << r.label << " l=" << r.l << ": " << n << "\n";
    }
    {
        auto f = open_out(ctx.out_dir / "summary.csv");
        write_summary(f, reports);
    }
    for (const auto& r : reports) {
        const std::string suffix = per_cell_names ? "_" + r.label + "_l" + std::to_string(r.l) : "";
        auto e = open_out(ctx.out_dir / ("equity" + suffix + ".csv"));
        write_equity_csv(e, r.equity);
        auto t = open_out(ctx.out_dir / ("trades" + suffix + ".csv"));
        write_trades_csv(t, r.trades);
    }
}

inline int cmd_backtest(const Context& ctx)
{
    const auto& c = ctx.cfg;
    const auto d = load_data(ctx);
    const ModelSpec spec = model_spec(c, c.mode, c.l);
    const long warmup = auto_warmup(c, spec);
    echo_config(ctx);

    BacktestReport report;
    if (ctx.verbose) {
        // Same run, with every signal logged.
        SsaForecaster model(spec);
        auto sig = open_out(ctx.out_dir / "signals.csv");
        write_signal_header(sig);
        const auto strategy = strategy_config(c);
        report = run_backtest(
            d.panel, d.prices,
            [&](const ReturnPanel& p, Eigen::Index t) {
                Eigen::VectorXd fc = model(p, t);
                for (const auto& s : generate_signals(fc, p.pair_order, strategy))
                    write_signal_row(sig, p.timestamps[static_cast<std::size_t>(t)], s);
                return fc;
            },
            strategy, account_config(c), warmup);
        report.l = spec.fit.l;
        report.label = std::string(to_string(spec.fit.mode));
        report.nonlinear_fallbacks = model.fallbacks();
    } else {
        report = run_backtest(d.panel, d.prices, spec, strategy_config(c), account_config(c), warmup);
    }
    write_run_outputs(ctx, {report}, false);
    write_report_table(*ctx.out, {report});
    if (report.bankrupt)
        *ctx.out << "Bankrupt at " << report.bankrupt_time << " (partial report)\n";
    return Ok;
}

inline int cmd_sweep(const Context& ctx)
{
    const auto& c = ctx.cfg;
    const auto d = load_data(ctx);
    std::vector<ModelSpec> specs;
    long warmup = 0;
    for (SsaMode m : c.sweep_modes)
        for (long l : c.sweep_l) {
            specs.push_back(model_spec(c, m, l));
            warmup = std::max(warmup, auto_warmup(c, specs.back()));
        }
    echo_config(ctx);
    const auto reports = run_sweep(d.panel, d.prices, specs, strategy_config(c), account_config(c), warmup);
    write_run_outputs(ctx, reports, true);
    write_report_table(*ctx.out, reports);
    return Ok;
}

/// Re-renders the table from a previous run's summary.csv.
inline int cmd_report(const Context& ctx)
{
    const auto path = ctx.out_dir / "summary.csv";
    std::ifstream in(path);
    if (!in)
        throw IoError("NotFound: " + path.string());
    std::string raw;
    std::getline(in, raw);
    std::vector<BacktestReport> rows;
    long line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        auto f = ssafx::detail::split(ssafx::detail::trim(raw));
        if (f.size() == 1 && f[0].empty())
            continue;
        if (f.size() != 6)
            throw Error(ErrorKind::MalformedLine, path.string() + " line " + std::to_string(line_no), line_no);
        BacktestReport r;
        r.label = std::string(f[0]);
        r.l = detail::number<long>("l", f[1]);
        r.profit_P = detail::number<double>("profit", f[2]);
        if (f[3] != "nan")
            r.sharpe_Sh = detail::number<double>("sharpe", f[3]);
        r.drawdown_D = detail::number<double>("drawdown", f[4]);
        r.trade_count = detail::number<std::size_t>("trades", f[5]);
        rows.push_back(std::move(r));
    }
    write_report_table(*ctx.out, rows);
    return Ok;
}

/// Full CLI entry point; argv[0] is the program name.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Multi-currency SSA forecasting and backtesting"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir;
    bool verbose = false;
    app.add_option("--config", config_path, "run configuration (key = value per line)");
    app.add_option("--out", out_dir, "output directory (overrides output_dir)");
    app.add_flag("--verbose", verbose, "model diagnostics and signal log");
    auto* ingest = app.add_subcommand("ingest", "parse quotes, build and cache the return panel");
    auto* forecast = app.add_subcommand("forecast", "next-step forecast for the latest bar");
    auto* backtest = app.add_subcommand("backtest", "walk-forward backtest of one configuration");
    auto* sweep = app.add_subcommand("sweep", "backtests over sweep_modes x sweep_l");
    auto* report = app.add_subcommand("report", "print the table of a previous run");
    for (auto* sub : {ingest, forecast, backtest, sweep, report}) {
        sub->add_option("--config", config_path, "run configuration");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_flag("--verbose", verbose, "verbose output");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return Ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return UsageError;
    }

    Context ctx;
    ctx.verbose = verbose;
    ctx.out = &out;
    ctx.err = &err;
    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                err << "NotFound: " << config_path << "\n";
                return UsageError;
            }
            ctx.cfg = parse_run_config(in);
        } else if (!report->parsed()) {
            err << "usage error: --config is required\n";
            return UsageError;
        }
        if (!out_dir.empty())
            ctx.cfg.output_dir = out_dir;
        ctx.out_dir = ctx.cfg.output_dir;
        if (!report->parsed())
            validate(ctx.cfg, forecast->parsed() ? ctx.cfg.panel_path.empty() : true, sweep->parsed());
    } catch (const Error& e) {
        err << "config error: " << e.what() << "\n";
        return UsageError;
    }

    try {
        if (ingest->parsed())
            return cmd_ingest(ctx);
        if (forecast->parsed())
            return cmd_forecast(ctx);
        if (backtest->parsed())
            return cmd_backtest(ctx);
        if (sweep->parsed())
            return cmd_sweep(ctx);
        return cmd_report(ctx);
    } catch (const IoError& e) {
        err << e.what() << "\n";
        return UsageError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << e.what() << "\n";
        return UsageError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return PipelineError;
    }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    std::vector<const char*> argv{"ssafx"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace ssafx::cli
