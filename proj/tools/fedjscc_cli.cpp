#include <CLI11.hpp>

#include "fedjscc/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"desk-scale federated joint source-channel coding simulator"};

    std::string config_path, mode, out;
    std::uint64_t seed = 0;
    double snr_mean = 0, snr_std = 0;
    std::size_t clients = 0, rounds = 0, local_steps = 0;
    std::vector<std::string> toggles;

    auto* o_config = app.add_option("--config", config_path, "json config file");
    auto* o_mode = app.add_option("--mode", mode,
                                  "train|ablate|verify-theory|channel-sweep");
    auto* o_seed = app.add_option("--seed", seed, "rng seed");
    auto* o_out = app.add_option("--out", out, "output directory");
    auto* o_snr_mean = app.add_option("--snr-mean", snr_mean, "snr mean (db)");
    auto* o_snr_std = app.add_option("--snr-std", snr_std, "snr std (db)");
    auto* o_clients = app.add_option("--clients", clients, "number of clients");
    auto* o_rounds = app.add_option("--rounds", rounds, "training rounds T");
    auto* o_local = app.add_option("--local-steps", local_steps, "local steps tau");
    app.add_option("--toggle", toggles,
                   "dual_pipeline|decoder_preprocess|pfl=<bool>, repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help exits 0, bad flags are config errors
    }

    try {
        fedjscc::ExperimentConfig cfg;
        if (o_config->count()) cfg = fedjscc::load_config(config_path);
        if (o_mode->count()) cfg.mode = mode;
        if (o_seed->count()) cfg.seed = seed;
        if (o_out->count()) cfg.out = out;
        if (o_snr_mean->count()) cfg.snr.mean_db = snr_mean;
        if (o_snr_std->count()) cfg.snr.std_db = snr_std;
        if (o_clients->count()) cfg.clients = clients;
        if (o_rounds->count()) cfg.sched.rounds = rounds;
        if (o_local->count()) cfg.sched.local_steps = local_steps;
        for (const auto& t : toggles) {
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw fedjscc::ConfigError("toggle: expected name=bool, got " + t);
            std::string name = t.substr(0, eq), val = t.substr(eq + 1);
            bool on;
            if (val == "true" || val == "1")
                on = true;
            else if (val == "false" || val == "0")
                on = false;
            else
                throw fedjscc::ConfigError("toggle " + name + ": bad bool " + val);
            if (name == "dual_pipeline")
                cfg.toggles.dual_pipeline = on;
            else if (name == "decoder_preprocess")
                cfg.toggles.decoder_preprocess = on;
            else if (name == "pfl")
                cfg.toggles.pfl = on;
            else
                throw fedjscc::ConfigError("toggle: unknown name " + name);
        }
        return fedjscc::run_cli(cfg);
    } catch (const fedjscc::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return 3;
    }
}
