#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "casseg/data.hpp"
#include "casseg/fields.hpp"
#include "casseg/nn.hpp"

namespace casseg {

using Json = nlohmann::ordered_json;

enum class ExperimentKind { gradcheck, toy_imbalance, saliency, multiregion, props };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct GradcheckSweep {
    std::vector<std::string> networks{"mlp", "dense-deep", "conv", "fcn-small"};
    std::size_t repeats = 9;  // seeded draws per (network, loss) pair
    double step = 1e-5;
    double tolerance = 1e-4;
    double dense_tolerance = 1e-6;
};

struct PostprocParams {
    std::size_t clusters = 20;
    double min_fraction = 0.02;
};

struct PropsParams {
    std::size_t bound_samples = 10000;
    std::size_t grid_resolution = 100;  // simplex grid step is 1 / resolution
    std::size_t oracle_fixtures = 100;
    std::size_t fd_fields = 50;
    double sparsity_threshold = 0.9;
};

// Everything an experiment run depends on. Every field has an explicit
// default, and to_json() emits all of them so reports describe themselves.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::props;
    std::uint64_t seed = 0;
    std::vector<LossKind> losses;
    std::vector<std::string> fidelities;  // "high" or "low"
    double flip_probability = 0.5;
    std::string network = "fcn";
    std::size_t hidden_channels = 8;
    std::size_t output_channels = 2;
    TrainConfig train;
    std::size_t log_every = 10;

    SegmentationParams data;
    std::size_t train_count = 16;
    std::size_t val_count = 8;
    std::size_t test_count = 16;

    ToyImbalanceParams toy;
    GradcheckSweep sweep;
    PostprocParams postproc;
    PropsParams props;

    static ExperimentConfig defaults(ExperimentKind kind);
    // Starts from defaults(kind) and overrides the keys present. Unknown keys,
    // wrong types and out-of-range values raise ConfigError.
    static ExperimentConfig from_json(const Json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    Json to_json() const;
    void validate() const;
};

// Deterministic report: the canonical body, flat per-image rows for the CSV,
// and optional side files.
struct Report {
    Json body = Json::object();
    std::vector<std::string> csv_header;
    std::vector<std::vector<std::string>> csv_rows;
    std::vector<std::pair<std::string, SaliencyMap>> heatmaps;  // file name, map
    std::vector<std::pair<std::string, Json>> attachments;      // file name, JSON document

    bool passed() const;
};

// Layer stack for a named preset. "fcn" is Conv-ReLU-Conv-ReLU-Conv-Softmax
// with 3x3 kernels; "mlp" is Dense(in, hidden)-ReLU-Dense(hidden, out)-Softmax.
// The remaining presets are small nets used by the gradient sweep.
std::vector<LayerSpec> network_preset(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out);

struct TrainLog {
    std::vector<std::pair<std::size_t, double>> losses;  // (step, batch loss) every log_every steps
    std::size_t steps = 0;
};

// Minibatch training. Each epoch visits the examples in a seeded order.
TrainLog train_network(Network& net, const std::vector<Example>& examples, const TrainConfig& cfg,
                       std::size_t log_every = 10);

DescriptorField predict(const Network& net, const Tensor& input);

Report run_gradcheck(const ExperimentConfig& cfg, const GradientHook& hook = {});
Report run_toy_imbalance(const ExperimentConfig& cfg);
Report run_saliency(const ExperimentConfig& cfg);
Report run_multiregion(const ExperimentConfig& cfg);
Report run_props(const ExperimentConfig& cfg);
Report run_experiment(const ExperimentConfig& cfg);

// Writes report.json, metrics.csv, heatmap PGMs and attachments into an
// existing directory.
void write_report(const Report& report, const std::filesystem::path& dir);
void render_heatmap(const SaliencyMap& s, const std::filesystem::path& path);

} // namespace casseg
