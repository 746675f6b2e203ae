// Writes a correlated random-walk quote CSV for the eight reference pairs.

#include <ssafx/synthetic.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Generate synthetic 1-minute quotes"};
    long minutes = 20000;
    std::uint64_t seed = 7;
    double rho = 0.7;
    double vol = 1e-4;
    ssafx::Timestamp start = 0;
    std::string path = "quotes.csv";
    app.add_option("--minutes", minutes, "number of bars per pair");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--rho", rho, "pairwise correlation of log-returns");
    app.add_option("--vol", vol, "per-minute log-return std");
    app.add_option("--start", start, "first timestamp (minutes since epoch)");
    app.add_option("-o,--output", path, "output CSV");
    CLI11_PARSE(app, argc, argv);

    auto market = ssafx::reference_market(minutes, seed);
    market.correlation = rho;
    market.volatility = vol;
    market.start = start;
    std::ofstream out(path);
    if (!out) {
        std::cerr << "cannot write " << path << "\n";
        return 2;
    }
    ssafx::write_quote_csv(out, ssafx::generate_market(market));
    return 0;
}
