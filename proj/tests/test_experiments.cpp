#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "casseg/errors.hpp"
#include "casseg/experiments.hpp"
#include "casseg/pgm.hpp"

using namespace casseg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "casseg_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig parse(const std::string& text) { return ExperimentConfig::from_json(Json::parse(text)); }

// Small settings so the end-to-end runs stay fast.
ExperimentConfig tiny(ExperimentKind kind) {
    auto c = ExperimentConfig::defaults(kind);
    c.data.height = 12;
    c.data.width = 12;
    c.train_count = 4;
    c.val_count = kind == ExperimentKind::saliency ? 2 : 0;
    c.test_count = 2;
    c.hidden_channels = 4;
    c.train.epochs = 3;
    c.toy.n1 = 60;
    c.toy.n2 = 6;
    c.props.bound_samples = 200;
    c.props.grid_resolution = 20;
    c.props.oracle_fixtures = 10;
    c.props.fd_fields = 5;
    c.props.sparsity_threshold = 0.0;
    return c;
}

} // namespace

TEST_CASE("experiment config defaults validate for every kind") {
    for (auto k : {ExperimentKind::gradcheck, ExperimentKind::toy_imbalance, ExperimentKind::saliency,
                   ExperimentKind::multiregion, ExperimentKind::props}) {
        CHECK_NOTHROW(ExperimentConfig::defaults(k).validate());
        CHECK(experiment_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(experiment_kind_from_string("segment"), ConfigError);
}

TEST_CASE("experiment config parsing") {
    auto c = parse(R"({"experiment": "saliency", "seed": 7, "losses": ["ce"], "fidelities": ["low"],
                       "flip_probability": 0.25, "train": {"optimizer": "sgd", "epochs": 5, "alpha": 0.3},
                       "data": {"height": 16, "width": 20, "test": 3}})");
    CHECK(c.kind == ExperimentKind::saliency);
    CHECK(c.seed == 7);
    CHECK(c.losses == std::vector<LossKind>{LossKind::ce});
    CHECK(c.fidelities == std::vector<std::string>{"low"});
    CHECK(c.flip_probability == 0.25);
    CHECK_FALSE(c.train.adam);
    CHECK(c.train.epochs == 5);
    CHECK(c.train.alpha == 0.3);
    CHECK(c.data.height == 16);
    CHECK(c.data.width == 20);
    CHECK(c.test_count == 3);

    SUBCASE("round trip through to_json") {
        const auto again = ExperimentConfig::from_json(c.to_json());
        CHECK(again.to_json() == c.to_json());
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(parse(R"({"seed": 1})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "saliency", "sede": 1})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "saliency", "seed": "one"})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "saliency", "losses": ["dice"]})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "saliency", "fidelities": ["medium"]})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "saliency", "flip_probability": 1.5})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "saliency", "train": {"epochs": -1}})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "saliency", "network": {"name": "resnet"}})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "gradcheck", "gradcheck": {"networks": []}})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "gradcheck", "gradcheck": {"repeats": 0}})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "multiregion", "network": {"output_channels": 2}})"), ConfigError);
        CHECK_THROWS_AS(parse(R"({"experiment": "multiregion", "losses": ["cace"]})"), ConfigError);
    }
    CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("network presets") {
    auto fcn = network_init(network_preset("fcn", 1, 8, 2), 0);
    CHECK(fcn.layers.size() == 6);
    CHECK(fcn.input_channels() == 1);
    CHECK(fcn.output_channels() == 2);
    auto mlp = network_init(network_preset("mlp", 2, 10, 2), 0);
    CHECK(mlp.parameter_count() == 2 * 10 + 10 + 10 * 2 + 2);
    CHECK_THROWS_AS(network_preset("unet", 1, 1, 1), ConfigError);
}

TEST_CASE("train_network logs at a fixed stride and is deterministic") {
    std::vector<Example> ex;
    ex.push_back({Tensor({1, 4, 2}, std::vector<double>{0, 0, 0.1, 0, 1, 1, 0.9, 1}), RegionPartition(1, 4, {0, 0, 1, 1})});
    TrainConfig t;
    t.epochs = 25;
    t.batch_size = 1;
    auto a = network_init(network_preset("mlp", 2, 4, 2), 3);
    auto b = a;
    const auto la = train_network(a, ex, t, 10), lb = train_network(b, ex, t, 10);
    CHECK(la.steps == 25);
    REQUIRE(la.losses.size() == 3);
    CHECK(la.losses[1].first == 10);
    CHECK(la.losses == lb.losses);
    CHECK(a.params == b.params);
    CHECK_THROWS_AS(train_network(a, {}, t), DataError);
}

TEST_CASE("run_gradcheck") {
    auto c = ExperimentConfig::defaults(ExperimentKind::gradcheck);
    c.sweep.repeats = 2;
    auto r = run_gradcheck(c);
    CHECK(r.body["combinations"] == 4 * 3 * 2);
    CHECK(r.passed());
    CHECK(r.body["max_relative_error"].get<double>() <= 1e-4);
    CHECK(r.csv_rows.size() == 24);

    auto broken = run_gradcheck(c, [](std::vector<Tensor>& grads) {
        for (auto& g : grads)
            for (auto& v : g.data()) v += 1e-2;
    });
    CHECK_FALSE(broken.passed());
    CHECK(broken.body["status"] == "fail");
}

TEST_CASE("run_toy_imbalance") {
    auto c = tiny(ExperimentKind::toy_imbalance);
    const auto r = run_toy_imbalance(c);
    REQUIRE(r.body["runs"].size() == 2);
    for (const auto& run : r.body["runs"]) {
        const auto& m = run["confusion"];
        CHECK(m[0][0].get<std::size_t>() + m[0][1].get<std::size_t>() + m[1][0].get<std::size_t>() +
                  m[1][1].get<std::size_t>() ==
              66);
        CHECK(m[0][1].get<std::size_t>() + m[1][1].get<std::size_t>() == 6);
    }
    CHECK(r.body["runs"][1]["bounds"]["violations"] == 0);
    CHECK(run_toy_imbalance(c).body.dump() == r.body.dump());
}

TEST_CASE("run_saliency") {
    auto c = tiny(ExperimentKind::saliency);
    const auto r = run_saliency(c);
    REQUIRE(r.body["arms"].size() == 6);
    for (const auto& arm : r.body["arms"]) {
        const double f = arm["f_beta"].get<double>(), m = arm["mae"].get<double>();
        CHECK((f >= 0.0 && f <= 1.0));
        CHECK((m >= 0.0 && m <= 1.0));
        CHECK(arm["per_image"].size() == 2);
        if (arm["loss"] == "cas") CHECK(arm["bounds"]["violations"] == 0);
        if (arm["fidelity"] == "high") CHECK(arm["flipped_train_images"] == 0);
    }
    CHECK(r.csv_rows.size() == 12);
    CHECK(r.heatmaps.size() == 12);
    CHECK(run_saliency(c).body.dump() == r.body.dump());
}

TEST_CASE("run_multiregion") {
    auto c = tiny(ExperimentKind::multiregion);
    const auto r = run_multiregion(c);
    CHECK(r.body["identity_check"]["pass"] == true);
    CHECK(r.body["identity_check"]["rand_index"] == 1.0);
    CHECK(r.body["identity_check"]["variation_of_information"] == 0.0);
    REQUIRE(r.body["arms"].size() == 4);
    for (const auto& arm : r.body["arms"]) {
        const double ri = arm["rand_index"].get<double>();
        CHECK((ri >= 0.0 && ri <= 1.0));
    }
    c.output_channels = 2;
    CHECK_THROWS_AS(run_multiregion(c), ConfigError);
}

TEST_CASE("run_props on reduced settings") {
    const auto r = run_props(tiny(ExperimentKind::props));
    CHECK(r.body["properties"].size() == 9);
    for (const auto& p : r.body["properties"]) {
        INFO(p["property"].get<std::string>());
        CHECK(p["pass"] == true);
    }
}

TEST_CASE("write_report and render_heatmap") {
    const auto dir = fresh_dir("report");
    Report r;
    r.body = Json{{"status", "pass"}};
    r.csv_header = {"image", "score"};
    r.csv_rows = {{"0", "0.5"}};
    r.heatmaps.emplace_back("map.pgm", SaliencyMap(2, 2, {0.0, 0.25, 0.5, 1.0}));
    r.attachments.emplace_back("manifest.json", Json{{"generator", "x"}});
    write_report(r, dir);

    std::ifstream csv(dir / "metrics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "image,score");
    CHECK(Json::parse(std::ifstream(dir / "report.json")) == r.body);
    CHECK(fs::exists(dir / "manifest.json"));

    const Tensor back = pgm_read(dir / "map.pgm");
    const std::vector<double> expected{0.0, 0.25, 0.5, 1.0};
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(back[i] - expected[i]) <= 1.0 / 255.0);

    try {
        write_report(r, dir / "missing");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("missing") != std::string::npos);
    }
}
