#pragma once

// Nonlinear filtration phi: maps the SSA-filtered return vector at one step to
// the observed return at the next. Two forms: separable polynomial least
// squares and a feedforward network trained by backpropagation.

#include <ssafx/error.hpp>
#include <ssafx/jacobi.hpp>
#include <ssafx/random.hpp>

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ssafx {

// ---------------------------------------------------------------- polynomial

/// Output coordinate i is a polynomial in input coordinate i:
/// out_i = sum_k coeffs(i, k) * x_i^k.
struct PolyFilter {
    int degree = 1;
    Eigen::MatrixXd coeffs; ///< dim x (degree + 1)

    Eigen::Index dim() const noexcept { return coeffs.rows(); }

    Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const
    {
        if (x.size() != dim())
            throw Error(ErrorKind::DimensionMismatch, "input has " + std::to_string(x.size()) + " coordinates");
        Eigen::VectorXd out(dim());
        for (Eigen::Index i = 0; i < dim(); ++i) {
            double acc = 0.0;
            for (int k = degree; k >= 0; --k)
                acc = acc * x[i] + coeffs(i, k);
            out[i] = acc;
        }
        return out;
    }
};

namespace detail {

inline double binomial(int n, int k)
{
    double r = 1.0;
    for (int j = 1; j <= k; ++j)
        r = r * (n - k + j) / j;
    return r;
}

} // namespace detail

/// Per-coordinate least squares via the normal equations on standardized
/// inputs; falls back to a small ridge term when the Gram matrix condition
/// estimate exceeds 1e12. Coefficients are returned in raw input units.
inline PolyFilter polyfit(const std::vector<Eigen::VectorXd>& inputs, const std::vector<Eigen::VectorXd>& targets,
                          int degree)
{
    if (degree < 1)
        throw Error(ErrorKind::BadParams, "degree must be >= 1");
    if (inputs.size() != targets.size())
        throw Error(ErrorKind::DimensionMismatch, "inputs and targets differ in length");
    if (inputs.size() < static_cast<std::size_t>(degree) + 1)
        throw Error(ErrorKind::TooFewSamples,
                    std::to_string(inputs.size()) + " samples for degree " + std::to_string(degree));
    const Eigen::Index dim = inputs.front().size();
    for (std::size_t s = 0; s < inputs.size(); ++s)
        if (inputs[s].size() != dim || targets[s].size() != dim)
            throw Error(ErrorKind::DimensionMismatch, "sample " + std::to_string(s) + " has inconsistent dims");

    bool all_identical = true;
    for (std::size_t s = 1; s < inputs.size() && all_identical; ++s)
        all_identical = inputs[s] == inputs[0];
    if (all_identical)
        throw Error(ErrorKind::DegenerateDesign, "all inputs identical");

    const auto S = static_cast<Eigen::Index>(inputs.size());
    const int terms = degree + 1;
    PolyFilter filter;
    filter.degree = degree;
    filter.coeffs = Eigen::MatrixXd::Zero(dim, terms);

    JacobiConfig cond_cfg;
    cond_cfg.epsilon = 1e-14;
    cond_cfg.stop = StopMode::Relative;

    Eigen::VectorXd x(S), y(S);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index s = 0; s < S; ++s) {
            x[s] = inputs[static_cast<std::size_t>(s)][i];
            y[s] = targets[static_cast<std::size_t>(s)][i];
        }
        const double mean = x.mean();
        double scale = std::sqrt((x.array() - mean).square().mean());
        if (!(scale > 0.0))
            scale = 1.0;

        Eigen::MatrixXd design(S, terms);
        for (Eigen::Index s = 0; s < S; ++s) {
            const double z = (x[s] - mean) / scale;
            double pw = 1.0;
            for (int k = 0; k < terms; ++k, pw *= z)
                design(s, k) = pw;
        }
        Eigen::MatrixXd gram = design.transpose() * design;
        const Eigen::VectorXd rhs = design.transpose() * y;

        const auto eig = jacobi_eigen(SymmetricMatrix(gram), cond_cfg);
        const double hi = eig.values.cwiseAbs().maxCoeff();
        const double lo = eig.values.cwiseAbs().minCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12)
            gram.diagonal().array() += 1e-10 * gram.trace() / terms;
        const Eigen::VectorXd b = gram.ldlt().solve(rhs);

        // Expand sum_k b_k ((x - mean) / scale)^k into powers of x.
        const double alpha = 1.0 / scale;
        const double beta = -mean / scale;
        for (int k = 0; k < terms; ++k)
            for (int j = 0; j <= k; ++j)
                filter.coeffs(i, j) +=
                    b[k] * detail::binomial(k, j) * std::pow(alpha, j) * std::pow(beta, k - j);
    }
    return filter;
}

// ---------------------------------------------------------------------- MLP

enum class Activation { Tanh, Sigmoid };

inline std::string_view to_string(Activation a) noexcept { return a == Activation::Tanh ? "Tanh" : "Sigmoid"; }

/// Feedforward network: hidden layers use `activation`, the output layer is
/// linear. weights[k] maps layer k (size layer_sizes[k]) to layer k + 1.
struct MlpNetwork {
    std::vector<int> layer_sizes;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::Tanh;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int hidden_layers() const { return static_cast<int>(layer_sizes.size()) - 2; }

    void check() const
    {
        if (layer_sizes.size() < 2 || weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size())
            throw Error(ErrorKind::BadParams, "inconsistent layer count");
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (layer_sizes[k] < 1 || weights[k].rows() != layer_sizes[k + 1] ||
                weights[k].cols() != layer_sizes[k] || biases[k].size() != layer_sizes[k + 1])
                throw Error(ErrorKind::BadParams, "inconsistent shape at layer " + std::to_string(k));
            if (!weights[k].allFinite() || !biases[k].allFinite())
                throw Error(ErrorKind::BadParams, "non-finite parameter at layer " + std::to_string(k));
        }
    }
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
inline MlpNetwork make_mlp(std::vector<int> layer_sizes, Activation activation, std::uint64_t seed)
{
    if (layer_sizes.size() < 2)
        throw Error(ErrorKind::BadParams, "need input and output layers");
    for (int n : layer_sizes)
        if (n < 1)
            throw Error(ErrorKind::BadParams, "layer sizes must be positive");
    MlpNetwork net;
    net.layer_sizes = std::move(layer_sizes);
    net.activation = activation;
    Rng rng(seed);
    for (std::size_t k = 0; k + 1 < net.layer_sizes.size(); ++k) {
        const int fan_in = net.layer_sizes[k];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(net.layer_sizes[k + 1], fan_in);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                w(r, c) = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(net.layer_sizes[k + 1]));
    }
    return net;
}

struct TrainConfig {
    int epochs = 1000;
    double learning_rate = 0.05;
    std::uint64_t seed = 42; ///< consumed by make_mlp when the caller builds the network
    double l2_penalty = 0.0;

    void validate() const
    {
        if (epochs < 1)
            throw Error(ErrorKind::BadConfig, "epochs must be >= 1");
        if (!(learning_rate > 0.0))
            throw Error(ErrorKind::BadConfig, "learning_rate must be > 0");
        if (!(l2_penalty >= 0.0))
            throw Error(ErrorKind::BadConfig, "l2_penalty must be >= 0");
    }
};

struct TrainResult {
    MlpNetwork net;
    double final_loss = 0.0;
    std::vector<double> loss_history; ///< loss before each epoch's update
};

namespace detail {

inline Eigen::ArrayXXd activate(const Eigen::ArrayXXd& z, Activation a)
{
    if (a == Activation::Tanh)
        return z.tanh();
    return 1.0 / (1.0 + (-z).exp());
}

// Derivative expressed through the activation output h.
inline Eigen::ArrayXXd activate_grad(const Eigen::ArrayXXd& h, Activation a)
{
    if (a == Activation::Tanh)
        return 1.0 - h.square();
    return h * (1.0 - h);
}

// Batch forward pass; columns are samples. Returns every layer's output.
inline std::vector<Eigen::MatrixXd> forward_all(const MlpNetwork& net, const Eigen::MatrixXd& x)
{
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(net.weights.size() + 1);
    acts.push_back(x);
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        Eigen::MatrixXd z = net.weights[k] * acts.back();
        z.colwise() += net.biases[k];
        if (k + 1 < net.weights.size())
            z = activate(z.array(), net.activation).matrix();
        acts.push_back(std::move(z));
    }
    return acts;
}

inline double mse(const MlpNetwork& net, const Eigen::MatrixXd& out, const Eigen::MatrixXd& y, double l2)
{
    double loss = (out - y).squaredNorm() / static_cast<double>(y.size());
    if (l2 > 0.0)
        for (const auto& w : net.weights)
            loss += l2 * w.squaredNorm();
    return loss;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
};

inline Gradients backprop(const MlpNetwork& net, const std::vector<Eigen::MatrixXd>& acts, const Eigen::MatrixXd& y,
                          double l2)
{
    const std::size_t L = net.weights.size();
    Gradients g;
    g.dw.resize(L);
    g.db.resize(L);
    Eigen::MatrixXd delta = 2.0 * (acts.back() - y) / static_cast<double>(y.size());
    for (std::size_t k = L; k-- > 0;) {
        g.dw[k] = delta * acts[k].transpose();
        if (l2 > 0.0)
            g.dw[k] += 2.0 * l2 * net.weights[k];
        g.db[k] = delta.rowwise().sum();
        if (k > 0)
            delta = ((net.weights[k].transpose() * delta).array() * activate_grad(acts[k].array(), net.activation))
                        .matrix();
    }
    return g;
}

inline Eigen::MatrixXd to_columns(const std::vector<Eigen::VectorXd>& v, Eigen::Index dim)
{
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(v.size()));
    for (std::size_t s = 0; s < v.size(); ++s) {
        if (v[s].size() != dim)
            throw Error(ErrorKind::DimensionMismatch, "sample " + std::to_string(s) + " has wrong size");
        m.col(static_cast<Eigen::Index>(s)) = v[s];
    }
    return m;
}

} // namespace detail

inline Eigen::VectorXd mlp_forward(const MlpNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& x)
{
    if (x.size() != net.input_dim())
        throw Error(ErrorKind::DimensionMismatch,
                    "input has " + std::to_string(x.size()) + " entries, network expects " +
                        std::to_string(net.input_dim()));
    return detail::forward_all(net, Eigen::MatrixXd(x)).back().col(0);
}

/// Full-batch gradient descent on mean squared error (plus optional L2 on
/// weights). Deterministic: no sampling happens during training.
inline TrainResult mlp_train(MlpNetwork net, const std::vector<Eigen::VectorXd>& inputs,
                             const std::vector<Eigen::VectorXd>& targets, const TrainConfig& cfg)
{
    cfg.validate();
    net.check();
    if (inputs.empty() || inputs.size() != targets.size())
        throw Error(ErrorKind::DimensionMismatch, "dataset empty or inputs/targets differ in length");
    const Eigen::MatrixXd x = detail::to_columns(inputs, net.input_dim());
    const Eigen::MatrixXd y = detail::to_columns(targets, net.output_dim());

    TrainResult result;
    result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto acts = detail::forward_all(net, x);
        const double loss = detail::mse(net, acts.back(), y, cfg.l2_penalty);
        if (!std::isfinite(loss))
            throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch), epoch);
        result.loss_history.push_back(loss);
        const auto g = detail::backprop(net, acts, y, cfg.l2_penalty);
        for (std::size_t k = 0; k < net.weights.size(); ++k) {
            net.weights[k] -= cfg.learning_rate * g.dw[k];
            net.biases[k] -= cfg.learning_rate * g.db[k];
        }
    }
    result.final_loss = detail::mse(net, detail::forward_all(net, x).back(), y, cfg.l2_penalty);
    if (!std::isfinite(result.final_loss))
        throw Error(ErrorKind::NonFiniteLoss, "after final epoch", cfg.epochs);
    result.net = std::move(net);
    return result;
}

/// Largest relative discrepancy between the backprop gradient of the
/// single-sample MSE and central differences (step 1e-5) over every weight and
/// bias. Relative to max(|analytic|, |numeric|, 1e-6).
inline double gradient_check(const MlpNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& target)
{
    net.check();
    if (x.size() != net.input_dim() || target.size() != net.output_dim())
        throw Error(ErrorKind::DimensionMismatch, "sample does not match network");
    const Eigen::MatrixXd xm = x;
    const Eigen::MatrixXd ym = target;
    const auto g = detail::backprop(net, detail::forward_all(net, xm), ym, 0.0);

    constexpr double h = 1e-5;
    MlpNetwork probe = net;
    auto loss_at = [&]() { return detail::mse(probe, detail::forward_all(probe, xm).back(), ym, 0.0); };
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); };

    double worst = 0.0;
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        for (Eigen::Index r = 0; r < net.weights[k].rows(); ++r)
            for (Eigen::Index c = 0; c < net.weights[k].cols(); ++c) {
                double& w = probe.weights[k](r, c);
                const double saved = w;
                w = saved + h;
                const double up = loss_at();
                w = saved - h;
                const double down = loss_at();
                w = saved;
                worst = std::max(worst, rel(g.dw[k](r, c), (up - down) / (2.0 * h)));
            }
        for (Eigen::Index r = 0; r < net.biases[k].size(); ++r) {
            double& b = probe.biases[k][r];
            const double saved = b;
            b = saved + h;
            const double up = loss_at();
            b = saved - h;
            const double down = loss_at();
            b = saved;
            worst = std::max(worst, rel(g.db[k][r], (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

// ------------------------------------------------------------ filter facade

using NonlinearFilter = std::variant<PolyFilter, MlpNetwork>;

inline Eigen::VectorXd nonlinear_forecast(const PolyFilter& filter, const Eigen::Ref<const Eigen::VectorXd>& y_now)
{
    return filter(y_now);
}

inline Eigen::VectorXd nonlinear_forecast(const MlpNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& y_now)
{
    return mlp_forward(net, y_now);
}

inline Eigen::VectorXd nonlinear_forecast(const NonlinearFilter& filter, const Eigen::Ref<const Eigen::VectorXd>& y_now)
{
    return std::visit([&](const auto& f) { return nonlinear_forecast(f, y_now); }, filter);
}

// ------------------------------------------------------------ serialization

namespace detail {

inline void write_values(std::ostream& out, const double* data, Eigen::Index n)
{
    char buf[32];
    for (Eigen::Index k = 0; k < n; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", data[k]);
        out << (k == 0 ? "" : " ") << buf;
    }
    out << '\n';
}

inline void expect_token(std::istream& in, std::string_view token)
{
    std::string got;
    if (!(in >> got) || got != token)
        throw Error(ErrorKind::BadFormat, "expected '" + std::string(token) + "', got '" + got + "'");
}

template <typename T>
T read_value(std::istream& in)
{
    T v{};
    if (!(in >> v))
        throw Error(ErrorKind::BadFormat, "truncated or malformed value");
    return v;
}

} // namespace detail

inline void save_filter(std::ostream& out, const PolyFilter& f)
{
    out << "ssafx-poly 1\n" << "degree " << f.degree << "\n" << "dim " << f.dim() << "\n";
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = f.coeffs;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        detail::write_values(out, c.row(i).data(), c.cols());
}

inline void save_filter(std::ostream& out, const MlpNetwork& net)
{
    out << "ssafx-mlp 1\n" << "activation " << to_string(net.activation) << "\n" << "layers " << net.layer_sizes.size();
    for (int n : net.layer_sizes)
        out << ' ' << n;
    out << '\n';
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = net.weights[k];
        out << "W " << w.rows() << ' ' << w.cols() << '\n';
        detail::write_values(out, w.data(), w.size());
        out << "b " << net.biases[k].size() << '\n';
        detail::write_values(out, net.biases[k].data(), net.biases[k].size());
    }
}

inline void save_filter(std::ostream& out, const NonlinearFilter& f)
{
    std::visit([&](const auto& v) { save_filter(out, v); }, f);
}

inline NonlinearFilter load_filter(std::istream& in)
{
    std::string magic;
    if (!(in >> magic))
        throw Error(ErrorKind::BadFormat, "empty filter file");
    const int version = detail::read_value<int>(in);
    if (version != 1)
        throw Error(ErrorKind::BadFormat, "unsupported version " + std::to_string(version));
    if (magic == "ssafx-poly") {
        PolyFilter f;
        detail::expect_token(in, "degree");
        f.degree = detail::read_value<int>(in);
        detail::expect_token(in, "dim");
        const auto dim = detail::read_value<Eigen::Index>(in);
        if (f.degree < 1 || dim < 1)
            throw Error(ErrorKind::BadFormat, "bad degree or dim");
        f.coeffs.resize(dim, f.degree + 1);
        for (Eigen::Index i = 0; i < dim; ++i)
            for (int k = 0; k <= f.degree; ++k)
                f.coeffs(i, k) = detail::read_value<double>(in);
        return f;
    }
    if (magic == "ssafx-mlp") {
        MlpNetwork net;
        detail::expect_token(in, "activation");
        const auto act = detail::read_value<std::string>(in);
        if (act == "Tanh")
            net.activation = Activation::Tanh;
        else if (act == "Sigmoid")
            net.activation = Activation::Sigmoid;
        else
            throw Error(ErrorKind::BadFormat, "unknown activation " + act);
        detail::expect_token(in, "layers");
        const auto count = detail::read_value<std::size_t>(in);
        if (count < 2 || count > 64)
            throw Error(ErrorKind::BadFormat, "bad layer count");
        for (std::size_t k = 0; k < count; ++k)
            net.layer_sizes.push_back(detail::read_value<int>(in));
        for (std::size_t k = 0; k + 1 < count; ++k) {
            detail::expect_token(in, "W");
            const auto rows = detail::read_value<Eigen::Index>(in);
            const auto cols = detail::read_value<Eigen::Index>(in);
            if (rows != net.layer_sizes[k + 1] || cols != net.layer_sizes[k])
                throw Error(ErrorKind::BadFormat, "weight shape mismatch at layer " + std::to_string(k));
            Eigen::MatrixXd w(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c)
                    w(r, c) = detail::read_value<double>(in);
            detail::expect_token(in, "b");
            if (detail::read_value<Eigen::Index>(in) != rows)
                throw Error(ErrorKind::BadFormat, "bias size mismatch at layer " + std::to_string(k));
            Eigen::VectorXd b(rows);
            for (Eigen::Index r = 0; r < rows; ++r)
                b[r] = detail::read_value<double>(in);
            net.weights.push_back(std::move(w));
            net.biases.push_back(std::move(b));
        }
        net.check();
        return net;
    }
    throw Error(ErrorKind::BadFormat, "unknown filter type " + magic);
}

} // namespace ssafx
