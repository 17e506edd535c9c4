// bidask: run a config file through the pricing engine.
//
//   bidask run.cfg [--output out.csv] [--seed 42]

#include "bidask/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
    CLI::App app{"Option quotes under volatility-estimator uncertainty"};
    std::string config_path;
    std::string output;
    std::uint64_t seed = 0;
    app.add_option("config", config_path, "run specification (key = value lines)")->required();
    auto* out_opt = app.add_option("--output", output, "CSV destination (overrides the config)");
    auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot open config file '" << config_path << "'\n";
        return 1;
    }
    std::stringstream buf;
    buf << in.rdbuf();

    bidask::cli::RunConfig cfg;
    try {
        cfg = bidask::cli::parse_config(buf.str());
    } catch (const bidask::InputError& e) {
        std::cerr << "error: " << config_path << ": " << e.what() << '\n';
        return 1;
    } catch (const bidask::NumericError& e) {
        std::cerr << "error: " << config_path << ": " << e.what() << '\n';
        return 2;
    }
    bidask::cli::Overrides ov;
    if (*out_opt) ov.output = output;
    if (*seed_opt) ov.seed = seed;
    return bidask::cli::run(cfg, ov, std::cout, std::cerr);
}
