#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "codec.hpp"
#include "federation.hpp"

namespace fedjscc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string source = "synthetic";  // synthetic | image-folder
    std::size_t count = 256;           // total synthetic images
    std::size_t size = 16;             // square patch side
    int classes = 4;
    double alpha = 1.0;  // Dirichlet heterogeneity; large = homogeneous
    std::string path;    // image-folder root
};

struct ToggleConfig {
    bool dual_pipeline = true;
    bool decoder_preprocess = true;
    bool pfl = true;
};

struct TheoryConfig {
    std::vector<std::size_t> t_list = {10, 20, 50, 100, 200};
    std::size_t tau = 5;
    double c_fraction = 1.0;
    std::size_t clients = 4;
    std::size_t dim_u = 4;
    std::size_t dim_v = 3;
    std::vector<double> rate_q = {-0.25, -0.5};
};

struct ExperimentConfig {
    std::string mode = "train";  // train | ablate | verify-theory | channel-sweep
    std::uint64_t seed = 1;
    std::string out = "out";
    std::size_t clients = 4;
    FlSchedule sched;
    SnrDistribution snr;
    DatasetConfig dataset;
    ToggleConfig toggles;
    TheoryConfig theory;
    // codec shape
    std::size_t ratio_num = 1;
    std::size_t ratio_den = 6;
    std::size_t feat = 8;
    std::size_t stages = 2;
    std::size_t pre_hidden = 32;
    // objective
    std::size_t batch = 2;
    double cl_weight = 0.1;
    double temperature = 0.1;
    std::vector<double> eval_snr_grid;

    ExperimentConfig() {
        sched.rounds = 300;
        sched.local_steps = 5;
        sched.eta_u = 1e-4;
        sched.eta_v = 1e-4;
        for (double s = -5.0; s <= 20.0 + 1e-9; s += 2.5) eval_snr_grid.push_back(s);
    }

    CodecConfig codec_config() const {
        CodecConfig c;
        c.spec = {ratio_num, ratio_den, dataset.size, dataset.size, 3};
        c.feat = feat;
        c.stages = stages;
        c.pre_hidden = pre_hidden;
        c.dual_pipeline = toggles.dual_pipeline;
        c.decoder_preprocess = toggles.decoder_preprocess;
        c.snr_min_db = snr.min_db;
        c.snr_max_db = snr.max_db;
        return c;
    }

    void validate() const {
        auto fail = [](const std::string& field, const std::string& why) {
            throw ConfigError(field + ": " + why);
        };
        if (mode != "train" && mode != "ablate" && mode != "verify-theory" &&
            mode != "channel-sweep")
            fail("mode", "must be train|ablate|verify-theory|channel-sweep");
        if (clients < 1) fail("clients", "must be >= 1");
        try {
            sched.validate();
        } catch (const FederationError& e) {
            fail("schedule", e.what());
        }
        try {
            snr.validate();
        } catch (const ChannelError& e) {
            fail("snr", e.what());
        }
        if (dataset.source != "synthetic" && dataset.source != "image-folder")
            fail("dataset.source", "must be synthetic|image-folder");
        if (dataset.source == "synthetic") {
            if (dataset.count == 0) fail("dataset.count", "must be > 0");
            if (dataset.count % clients != 0)
                fail("dataset.count", "must divide evenly across clients");
            if (dataset.classes < 1) fail("dataset.classes", "must be >= 1");
            if (!(dataset.alpha > 0)) fail("dataset.alpha", "must be > 0");
        } else if (dataset.path.empty()) {
            fail("dataset.path", "required for image-folder source");
        }
        if (dataset.size < 4) fail("dataset.size", "must be >= 4");
        if (ratio_num == 0 || ratio_den == 0) fail("compression", "ratio must be positive");
        if (feat == 0 || stages == 0) fail("codec", "feat and stages must be >= 1");
        if (batch == 0) fail("batch", "must be >= 1");
        if (!(temperature > 0)) fail("temperature", "must be > 0");
        if (cl_weight < 0) fail("cl_weight", "must be >= 0");
        if (out.empty()) fail("out", "must be nonempty");
        if (mode == "verify-theory") {
            if (theory.t_list.empty()) fail("theory.t_list", "must be nonempty");
            if (theory.tau < 1) fail("theory.tau", "must be >= 1");
            if (!(theory.c_fraction > 0 && theory.c_fraction <= 1))
                fail("theory.c_fraction", "must be in (0, 1]");
            for (double q : theory.rate_q)
                if (!(q > -1 && q < 0)) fail("theory.rate_q", "entries must be in (-1, 0)");
        }
    }
};

namespace detail {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& dst,
            const std::string& scope) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(scope + key + ": wrong type");
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    using detail::get_if;
    get_if(j, "mode", c.mode, "");
    get_if(j, "seed", c.seed, "");
    get_if(j, "out", c.out, "");
    get_if(j, "clients", c.clients, "");
    get_if(j, "rounds", c.sched.rounds, "");
    get_if(j, "local_steps", c.sched.local_steps, "");
    get_if(j, "eta_u", c.sched.eta_u, "");
    get_if(j, "eta_v", c.sched.eta_v, "");
    std::string rule = "constant";
    if (c.sched.rule == LrRule::inverse_sqrt_round) rule = "inverse_sqrt_round";
    if (c.sched.rule == LrRule::power) rule = "power";
    get_if(j, "lr_rule", rule, "");
    if (rule == "constant")
        c.sched.rule = LrRule::constant;
    else if (rule == "inverse_sqrt_round")
        c.sched.rule = LrRule::inverse_sqrt_round;
    else if (rule == "power")
        c.sched.rule = LrRule::power;
    else
        throw ConfigError("lr_rule: must be constant|inverse_sqrt_round|power");
    get_if(j, "power_q", c.sched.power_q, "");
    get_if(j, "per_step_decay", c.sched.per_step_decay, "");
    if (j.contains("snr")) {
        const auto& s = j.at("snr");
        get_if(s, "mean_db", c.snr.mean_db, "snr.");
        get_if(s, "std_db", c.snr.std_db, "snr.");
        get_if(s, "min_db", c.snr.min_db, "snr.");
        get_if(s, "max_db", c.snr.max_db, "snr.");
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        get_if(d, "source", c.dataset.source, "dataset.");
        get_if(d, "count", c.dataset.count, "dataset.");
        get_if(d, "size", c.dataset.size, "dataset.");
        get_if(d, "classes", c.dataset.classes, "dataset.");
        get_if(d, "alpha", c.dataset.alpha, "dataset.");
        get_if(d, "path", c.dataset.path, "dataset.");
    }
    if (j.contains("toggles")) {
        const auto& t = j.at("toggles");
        get_if(t, "dual_pipeline", c.toggles.dual_pipeline, "toggles.");
        get_if(t, "decoder_preprocess", c.toggles.decoder_preprocess, "toggles.");
        get_if(t, "pfl", c.toggles.pfl, "toggles.");
    }
    if (j.contains("compression")) {
        const auto& r = j.at("compression");
        get_if(r, "num", c.ratio_num, "compression.");
        get_if(r, "den", c.ratio_den, "compression.");
    }
    if (j.contains("codec")) {
        const auto& k = j.at("codec");
        get_if(k, "feat", c.feat, "codec.");
        get_if(k, "stages", c.stages, "codec.");
        get_if(k, "pre_hidden", c.pre_hidden, "codec.");
    }
    get_if(j, "batch", c.batch, "");
    get_if(j, "cl_weight", c.cl_weight, "");
    get_if(j, "temperature", c.temperature, "");
    get_if(j, "eval_snr_grid", c.eval_snr_grid, "");
    if (j.contains("theory")) {
        const auto& t = j.at("theory");
        get_if(t, "t_list", c.theory.t_list, "theory.");
        get_if(t, "tau", c.theory.tau, "theory.");
        get_if(t, "c_fraction", c.theory.c_fraction, "theory.");
        get_if(t, "clients", c.theory.clients, "theory.");
        get_if(t, "dim_u", c.theory.dim_u, "theory.");
        get_if(t, "dim_v", c.theory.dim_v, "theory.");
        get_if(t, "rate_q", c.theory.rate_q, "theory.");
    }
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["mode"] = c.mode;
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["clients"] = c.clients;
    j["rounds"] = c.sched.rounds;
    j["local_steps"] = c.sched.local_steps;
    j["eta_u"] = c.sched.eta_u;
    j["eta_v"] = c.sched.eta_v;
    j["lr_rule"] = c.sched.rule == LrRule::constant ? "constant"
                   : c.sched.rule == LrRule::inverse_sqrt_round ? "inverse_sqrt_round"
                                                                : "power";
    j["power_q"] = c.sched.power_q;
    j["per_step_decay"] = c.sched.per_step_decay;
    j["snr"] = {{"mean_db", c.snr.mean_db},
                {"std_db", c.snr.std_db},
                {"min_db", c.snr.min_db},
                {"max_db", c.snr.max_db}};
    j["dataset"] = {{"source", c.dataset.source}, {"count", c.dataset.count},
                    {"size", c.dataset.size},     {"classes", c.dataset.classes},
                    {"alpha", c.dataset.alpha},   {"path", c.dataset.path}};
    j["toggles"] = {{"dual_pipeline", c.toggles.dual_pipeline},
                    {"decoder_preprocess", c.toggles.decoder_preprocess},
                    {"pfl", c.toggles.pfl}};
    j["compression"] = {{"num", c.ratio_num}, {"den", c.ratio_den}};
    j["codec"] = {{"feat", c.feat}, {"stages", c.stages}, {"pre_hidden", c.pre_hidden}};
    j["batch"] = c.batch;
    j["cl_weight"] = c.cl_weight;
    j["temperature"] = c.temperature;
    j["eval_snr_grid"] = c.eval_snr_grid;
    j["theory"] = {{"t_list", c.theory.t_list},   {"tau", c.theory.tau},
                   {"c_fraction", c.theory.c_fraction},
                   {"clients", c.theory.clients}, {"dim_u", c.theory.dim_u},
                   {"dim_v", c.theory.dim_v},     {"rate_q", c.theory.rate_q}};
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: invalid json in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace fedjscc
