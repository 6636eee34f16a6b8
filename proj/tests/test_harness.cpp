#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fedjscc/harness.hpp"

using namespace fedjscc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("fedjscc_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

ExperimentConfig tiny_train_config(const std::string& out, std::uint64_t seed = 3) {
    ExperimentConfig cfg;
    cfg.mode = "train";
    cfg.seed = seed;
    cfg.out = out;
    cfg.clients = 2;
    cfg.sched.rounds = 3;
    cfg.sched.local_steps = 2;
    cfg.sched.eta_u = 1e-3;
    cfg.sched.eta_v = 1e-3;
    cfg.dataset.count = 8;
    cfg.dataset.size = 8;
    cfg.feat = 4;
    cfg.pre_hidden = 8;
    cfg.eval_snr_grid = {0.0, 10.0};
    return cfg;
}

// metrics comparison modulo the wall-clock column
void check_rows_equal_sans_wall(const CsvTable& a, const CsvTable& b) {
    REQUIRE(a.header == b.header);
    REQUIRE(a.rows.size() == b.rows.size());
    std::size_t wall = a.column("wall_ms");
    for (std::size_t r = 0; r < a.rows.size(); ++r)
        for (std::size_t c = 0; c < a.header.size(); ++c)
            if (c != wall) {
                INFO("row " << r << " col " << a.header[c]);
                REQUIRE(a.rows[r][c] == b.rows[r][c]);
            }
}

}  // namespace

TEST_CASE("synthetic shards: shape, range and balanced sizes") {
    RngStream rng(1, 0, 0, 0);
    auto shards = synthesize_shards(64, 16, 16, 4, 4, 1e6, rng);
    REQUIRE(shards.size() == 4);
    std::vector<int> class_count(4, 0);
    for (const auto& s : shards) {
        CHECK(s.images.size() == 16);
        for (const auto& img : s.images) {
            CHECK(img.shape == std::vector<std::size_t>{16, 16, 3});
            for (double v : img.data) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
        }
        for (int l : s.labels) ++class_count[l];
    }
    // alpha -> infinity: near-uniform class totals overall
    for (int c = 0; c < 4; ++c) CHECK(class_count[c] == 16);
}

TEST_CASE("small alpha produces concentrated shards") {
    int concentrated_trials = 0;
    for (int trial = 0; trial < 20; ++trial) {
        RngStream rng(100 + trial, 0, 0, 0);
        auto shards = synthesize_shards(64, 8, 8, 4, 4, 0.1, rng);
        for (const auto& s : shards) {
            std::vector<int> cc(4, 0);
            for (int l : s.labels) ++cc[l];
            if (*std::max_element(cc.begin(), cc.end()) > 0.6 * (double)s.labels.size()) {
                ++concentrated_trials;
                break;
            }
        }
    }
    CHECK(concentrated_trials >= 1);
    CHECK(concentrated_trials > 10);  // in practice nearly every trial
}

TEST_CASE("synthesize rejects bad splits") {
    RngStream rng(1, 0, 0, 0);
    CHECK_THROWS_AS(synthesize_shards(0, 8, 8, 4, 4, 1.0, rng), DatasetError);
    CHECK_THROWS_AS(synthesize_shards(10, 8, 8, 4, 4, 1.0, rng), DatasetError);
}

TEST_CASE("png round trip and folder loading") {
    TempDir dir;
    RngStream rng(7, 0, 0, 0);
    std::vector<Tensor> originals;
    for (int i = 0; i < 3; ++i) {
        Tensor img = detail::synth_image(32, 32, i, rng);
        originals.push_back(img);
        save_png(dir.str() + "/img" + std::to_string(i) + ".png", img);
    }
    // quantization-only round trip
    Tensor back = load_png(dir.str() + "/img0.png");
    CHECK(back.shape == originals[0].shape);
    CHECK(max_abs_diff(back, originals[0]) <= 0.5 / 255.0 + 1e-12);

    // full-frame patch: crops equal the (quantized) originals
    std::ofstream(dir.str() + "/garbage.png") << "not a png";
    RngStream frng(8, 0, 0, 0);
    auto shards = load_folder_shards(dir.str(), 32, 32, 1, frng);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0].images.size() == 3);  // garbage skipped with a warning
    for (const auto& img : shards[0].images)
        CHECK(img.shape == std::vector<std::size_t>{32, 32, 3});

    CHECK_THROWS_AS(load_folder_shards(dir.str() + "/nope", 8, 8, 1, frng),
                    DatasetError);
}

TEST_CASE("random_crop bounds") {
    RngStream rng(9, 0, 0, 0);
    Tensor img = detail::synth_image(16, 12, 0, rng);
    Tensor full = random_crop(img, 16, 12, rng);
    CHECK(full.data == img.data);
    Tensor small = random_crop(img, 8, 8, rng);
    CHECK(small.shape == std::vector<std::size_t>{8, 8, 3});
    CHECK_THROWS_AS(random_crop(img, 20, 8, rng), DatasetError);
}

TEST_CASE("csv writes round trip bitwise") {
    TempDir dir;
    CsvTable t;
    t.header = {"a", "b", "c"};
    RngStream rng(11, 0, 0, 0);
    for (int r = 0; r < 20; ++r)
        t.rows.push_back({rng.gaussian() * 1e-7, rng.gaussian() * 1e9, rng.uniform()});
    std::string path = dir.str() + "/t.csv";
    write_csv(path, t);
    CsvTable back = read_csv(path);
    CHECK(back.header == t.header);
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(back.rows[r][c] == t.rows[r][c]);

    CHECK(back.column("b") == 1);
    CHECK_THROWS_AS(back.column("zz"), IoError);

    std::ofstream(dir.str() + "/bad.csv") << "a,b\n1,notanumber\n";
    CHECK_THROWS_AS(read_csv(dir.str() + "/bad.csv"), IoError);
    std::ofstream(dir.str() + "/ragged.csv") << "a,b\n1\n";
    CHECK_THROWS_AS(read_csv(dir.str() + "/ragged.csv"), IoError);
}

TEST_CASE("svg plot emits polylines for every series") {
    TempDir dir;
    std::string path = dir.str() + "/p.svg";
    svg_line_plot(path, "t", "x", "y",
                  {{"one", {0, 1, 2}, {1, 0, 2}}, {"two", {0, 1, 2}, {2, 2, 1}}});
    std::ifstream f(path);
    std::string all((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    CHECK(std::count(all.begin(), all.end(), '\n') > 5);
    std::size_t n = 0, pos = 0;
    while ((pos = all.find("<polyline", pos)) != std::string::npos) {
        ++n;
        ++pos;
    }
    CHECK(n == 2);
    CHECK(all.find("</svg>") != std::string::npos);
    CHECK_THROWS_AS(svg_line_plot(path, "t", "x", "y", {}), IoError);
}

TEST_CASE("config defaults match the paper-default schedule") {
    ExperimentConfig cfg;
    CHECK(cfg.sched.rounds == 300);
    CHECK(cfg.sched.local_steps == 5);
    CHECK(cfg.sched.eta_u == 1e-4);
    CHECK(cfg.sched.eta_v == 1e-4);
    CHECK(cfg.snr.mean_db == 7.5);
    CHECK(cfg.eval_snr_grid.size() == 11);  // -5..20 step 2.5
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config json round trip preserves every field") {
    ExperimentConfig cfg = tiny_train_config("/tmp/x", 42);
    cfg.sched.rule = LrRule::power;
    cfg.sched.power_q = -0.3;
    cfg.toggles.decoder_preprocess = false;
    cfg.theory.rate_q = {-0.4};
    ExperimentConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("config validation reports the offending field") {
    ExperimentConfig cfg;
    cfg.mode = "bogus";
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("mode") != std::string::npos);
    }
    cfg = ExperimentConfig{};
    cfg.dataset.count = 7;  // not divisible by 4 clients
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("dataset.count") != std::string::npos);
    }
    cfg = ExperimentConfig{};
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("load_config rejects malformed files") {
    TempDir dir;
    std::ofstream(dir.str() + "/bad.json") << "{not json";
    CHECK_THROWS_AS(load_config(dir.str() + "/bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir.str() + "/missing.json"), ConfigError);
    std::ofstream(dir.str() + "/ok.json") << R"({"rounds": 7, "mode": "train"})";
    CHECK(load_config(dir.str() + "/ok.json").sched.rounds == 7);
}

TEST_CASE("train mode is reproducible and rerunnable from its manifest") {
    TempDir dir;
    ExperimentConfig cfg = tiny_train_config(dir.str() + "/run1");
    TrainOutput a = run_train(cfg);
    CHECK(fs::exists(cfg.out + "/metrics.csv"));
    CHECK(fs::exists(cfg.out + "/manifest.json"));
    CHECK(fs::exists(cfg.out + "/checkpoint_client_0.bin"));
    CHECK(fs::exists(cfg.out + "/loss_vs_round.svg"));

    // identical seeds -> identical metrics
    ExperimentConfig cfg2 = cfg;
    cfg2.out = dir.str() + "/run2";
    TrainOutput b = run_train(cfg2);
    check_rows_equal_sans_wall(a.metrics, b.metrics);

    // rerun from the embedded manifest reproduces metrics bitwise
    ExperimentConfig manifest = load_config(cfg.out + "/manifest.json");
    manifest.out = dir.str() + "/run3";
    TrainOutput c = run_train(manifest);
    check_rows_equal_sans_wall(a.metrics, c.metrics);

    // emitted CSV is re-ingestible
    CsvTable disk = read_csv(cfg.out + "/metrics.csv");
    check_rows_equal_sans_wall(disk, a.metrics);
}

TEST_CASE("channel sweep: row count, determinism, missing checkpoint") {
    TempDir dir;
    ExperimentConfig cfg = tiny_train_config(dir.str() + "/run");
    cfg.eval_snr_grid.clear();
    for (double s = -5.0; s <= 20.0 + 1e-9; s += 2.5) cfg.eval_snr_grid.push_back(s);
    run_train(cfg);

    ExperimentConfig sweep = cfg;
    sweep.mode = "channel-sweep";
    CsvTable t1 = channel_sweep(sweep);
    CHECK(t1.rows.size() == 11);
    CsvTable t2 = channel_sweep(sweep, /*write_files=*/false);
    REQUIRE(t1.rows.size() == t2.rows.size());
    for (std::size_t r = 0; r < t1.rows.size(); ++r) REQUIRE(t1.rows[r] == t2.rows[r]);
    CHECK(fs::exists(sweep.out + "/channel_sweep.csv"));

    ExperimentConfig missing = sweep;
    missing.out = dir.str() + "/never_trained";
    CHECK_THROWS_AS(channel_sweep(missing), ConfigError);
}

TEST_CASE("ablate emits four rows whose manifests differ only in toggles") {
    TempDir dir;
    ExperimentConfig cfg = tiny_train_config(dir.str() + "/ab");
    cfg.mode = "ablate";
    cfg.sched.rounds = 2;
    CsvTable t = run_ablate(cfg);
    REQUIRE(t.rows.size() == 4);
    CHECK(t.rows[0][1] == 1.0);  // full system row first
    CHECK(t.rows[1][1] == 0.0);  // dual_pipeline off
    CHECK(t.rows[2][2] == 0.0);  // decoder_preprocess off
    CHECK(t.rows[3][3] == 0.0);  // pfl off

    nlohmann::json base =
        nlohmann::json::parse(std::ifstream(dir.str() + "/ab/ablation_row_0/manifest.json"));
    for (int r = 1; r < 4; ++r) {
        nlohmann::json row = nlohmann::json::parse(
            std::ifstream(dir.str() + "/ab/ablation_row_" + std::to_string(r) +
                          "/manifest.json"));
        for (auto& [key, val] : base.items()) {
            if (key == "toggles" || key == "out") continue;
            INFO("row " << r << " key " << key);
            CHECK(row.at(key) == val);
        }
        CHECK(row.at("toggles") != base.at("toggles"));
    }
}

TEST_CASE("verify-theory report is deterministic and passes") {
    TempDir dir;
    ExperimentConfig cfg;
    cfg.mode = "verify-theory";
    cfg.seed = 7;
    cfg.out = dir.str() + "/th1";
    cfg.theory.t_list = {10, 50};
    nlohmann::json a = run_verify_theory(cfg);
    cfg.out = dir.str() + "/th2";
    nlohmann::json b = run_verify_theory(cfg);
    CHECK(a == b);
    CHECK(a.at("pass").get<bool>());
    CHECK(a.at("lemma7").at("failures").get<int>() == 0);
    nlohmann::json disk =
        nlohmann::json::parse(std::ifstream(dir.str() + "/th1/theory_report.json"));
    CHECK(disk == a);
}

TEST_CASE("run_cli exit codes") {
    TempDir dir;
    std::ostringstream err;
    ExperimentConfig bad;
    bad.mode = "nope";
    CHECK(run_cli(bad, err) == 2);
    CHECK(err.str().find("error: config:") != std::string::npos);

    ExperimentConfig sweep = tiny_train_config(dir.str() + "/none");
    sweep.mode = "channel-sweep";
    CHECK(run_cli(sweep, err) == 2);  // missing checkpoint is a config problem

    ExperimentConfig ok = tiny_train_config(dir.str() + "/cli");
    CHECK(run_cli(ok, err) == 0);
    CHECK(fs::exists(dir.str() + "/cli/metrics.csv"));
}
