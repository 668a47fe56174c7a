#include "casseg/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "casseg/errors.hpp"
#include "casseg/losses.hpp"
#include "casseg/metrics.hpp"
#include "casseg/pgm.hpp"
#include "casseg/postproc.hpp"
#include "casseg/random.hpp"

namespace casseg {

namespace {

// Stream tags for seeds derived from ExperimentConfig::seed.
enum SeedTag : std::uint64_t { kCorruption = 1, kInit = 2, kOrder = 3, kClustering = 4 };

std::uint64_t derive(std::uint64_t seed, SeedTag tag) { return Rng::stream(seed, tag).next_u64(); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- config parsing -------------------------------------------------------

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
        }
    }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

void read_count(const Json& j, const char* key, std::size_t& out, const std::string& where) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(where + "." + key + ": expected a non-negative integer");
    }
    out = v.get<std::size_t>();
}

Json train_to_json(const TrainConfig& t, std::size_t log_every) {
    return Json{{"optimizer", t.adam ? "adam" : "sgd"},
                {"learning_rate", t.learning_rate},
                {"momentum", t.momentum},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"alpha", t.alpha},
                {"log_every", log_every}};
}

// ---- shared helpers -------------------------------------------------------

bool is_dense_only(const Network& net) {
    return std::none_of(net.layers.begin(), net.layers.end(),
                        [](const LayerSpec& l) { return std::holds_alternative<Conv2d>(l); });
}

struct ArmSpec {
    LossKind loss;
    std::string fidelity;
    std::string name() const { return to_string(loss) + "-" + fidelity; }
};

std::vector<ArmSpec> arms(const ExperimentConfig& cfg) {
    std::vector<ArmSpec> out;
    for (const auto& f : cfg.fidelities)
        for (auto l : cfg.losses) out.push_back({l, f});
    return out;
}

struct Splits {
    Dataset full;
    Dataset train;
    Dataset val;
    Dataset test;
};

Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end, const std::string& role) {
    Dataset out;
    out.samples.assign(ds.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       ds.samples.begin() + static_cast<std::ptrdiff_t>(end));
    out.manifest = ds.manifest;
    out.manifest.params["role"] = role;
    out.manifest.params["source_range"] = {begin, end};
    return out;
}

Splits make_splits(const ExperimentConfig& cfg) {
    SegmentationParams p = cfg.data;
    p.count = cfg.train_count + cfg.val_count + cfg.test_count;
    Splits s;
    s.full = gen_synthetic_segmentation(cfg.seed, p);
    const std::size_t a = cfg.train_count, b = a + cfg.val_count;
    s.train = slice(s.full, 0, a, "train");
    s.val = slice(s.full, a, b, "val");
    s.test = slice(s.full, b, p.count, "test");
    return s;
}

std::vector<Example> to_examples(const Dataset& ds) {
    std::vector<Example> ex;
    ex.reserve(ds.size());
    for (const auto& s : ds.samples) ex.push_back({standardize(s.input), s.partition});
    return ex;
}

TrainConfig arm_train_config(const ExperimentConfig& cfg, LossKind loss) {
    TrainConfig t = cfg.train;
    t.loss = loss;
    t.seed = derive(cfg.seed, kOrder);
    return t;
}

Json loss_log_json(const TrainLog& log) {
    Json arr = Json::array();
    for (const auto& [step, loss] : log.losses) arr.push_back(Json::array({step, loss}));
    return arr;
}

// Checks every logged value of a CAS run against the interval for n regions.
Json bounds_json(const TrainLog& log, LossKind loss, std::size_t regions, double alpha, bool& ok) {
    if (loss != LossKind::cas) return Json{{"checked", false}};
    const auto b = cas_bounds(regions, CasConfig(alpha));
    std::size_t violations = 0;
    for (const auto& entry : log.losses) violations += b.contains(entry.second) ? 0 : 1;
    ok = ok && violations == 0;
    return Json{{"checked", true},
                {"regions", regions},
                {"lower", b.lower},
                {"upper", b.upper},
                {"logged_values", log.losses.size()},
                {"violations", violations}};
}

double mean_max_channel(const std::vector<DescriptorField>& outputs) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& f : outputs) {
        for (std::size_t p = 0; p < f.pixels(); ++p) {
            auto px = f.pixel(p);
            sum += *std::max_element(px.begin(), px.end());
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

} // namespace

// ---- kinds and presets ----------------------------------------------------

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::gradcheck: return "gradcheck";
        case ExperimentKind::toy_imbalance: return "toy-imbalance";
        case ExperimentKind::saliency: return "saliency";
        case ExperimentKind::multiregion: return "multiregion";
        case ExperimentKind::props: return "props";
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
    for (auto k : {ExperimentKind::gradcheck, ExperimentKind::toy_imbalance, ExperimentKind::saliency,
                   ExperimentKind::multiregion, ExperimentKind::props}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown experiment '" + name + "'");
}

std::vector<LayerSpec> network_preset(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out) {
    if (name == "fcn") {
        return {Conv2d{in, hidden, 3}, Relu{}, Conv2d{hidden, hidden, 3}, Relu{}, Conv2d{hidden, out, 3},
                SoftmaxChannels{}};
    }
    if (name == "mlp") return {Dense{in, hidden}, Relu{}, Dense{hidden, out}, SoftmaxChannels{}};
    if (name == "dense-deep") {
        return {Dense{in, hidden}, Relu{}, Dense{hidden, hidden}, Relu{}, Dense{hidden, out}, SoftmaxChannels{}};
    }
    if (name == "conv") return {Conv2d{in, hidden, 3}, Relu{}, Conv2d{hidden, out, 3}, SoftmaxChannels{}};
    if (name == "fcn-small") {
        return {Conv2d{in, hidden, 3}, Relu{}, Conv2d{hidden, hidden, 1}, Relu{}, Conv2d{hidden, out, 3},
                SoftmaxChannels{}};
    }
    throw ConfigError("unknown network preset '" + name + "'");
}

// ---- config ---------------------------------------------------------------

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    c.data.height = 32;
    c.data.width = 32;
    c.data.textures = {{0.2, 0.05}, {0.8, 0.05}};
    c.data.min_side = 0.25;
    c.data.max_side = 0.55;
    c.train.adam = true;
    c.train.learning_rate = 0.01;
    c.train.epochs = 75;
    c.train.batch_size = 4;
    switch (kind) {
        case ExperimentKind::gradcheck:
            c.losses = {LossKind::cas, LossKind::ce, LossKind::cace};
            c.fidelities = {"high"};
            break;
        case ExperimentKind::toy_imbalance:
            c.losses = {LossKind::ce, LossKind::cas};
            c.fidelities = {"high"};
            c.network = "mlp";
            c.hidden_channels = 10;
            c.train.adam = false;
            c.train.learning_rate = 0.05;
            c.train.momentum = 0.9;
            c.train.epochs = 200;
            c.train.batch_size = 1;
            break;
        case ExperimentKind::saliency:
            c.losses = {LossKind::cas, LossKind::ce, LossKind::cace};
            c.fidelities = {"high", "low"};
            break;
        case ExperimentKind::multiregion:
            c.losses = {LossKind::cas, LossKind::ce};
            c.fidelities = {"high", "low"};
            c.data.textures = {{0.15, 0.05}, {0.5, 0.05}, {0.85, 0.05}};
            c.output_channels = 3;
            c.val_count = 0;
            break;
        case ExperimentKind::props:
            c.losses = {LossKind::cas};
            c.fidelities = {"high"};
            c.val_count = 0;
            c.test_count = 8;
            break;
    }
    return c;
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
    check_keys(j, {"experiment", "seed", "losses", "fidelities", "flip_probability", "network", "train", "data",
                   "toy", "gradcheck", "postproc", "props"},
               "config");
    if (!j.contains("experiment") || !j.at("experiment").is_string()) {
        throw ConfigError("config: 'experiment' must name the experiment kind");
    }
    ExperimentConfig c = defaults(experiment_kind_from_string(j.at("experiment").get<std::string>()));
    read(j, "seed", c.seed, "config");
    if (j.contains("losses")) {
        std::vector<std::string> names;
        read(j, "losses", names, "config");
        c.losses.clear();
        for (const auto& n : names) c.losses.push_back(loss_kind_from_string(n));
    }
    read(j, "fidelities", c.fidelities, "config");
    read(j, "flip_probability", c.flip_probability, "config");

    if (j.contains("network")) {
        const auto& n = j.at("network");
        check_keys(n, {"name", "hidden", "output_channels"}, "network");
        read(n, "name", c.network, "network");
        read_count(n, "hidden", c.hidden_channels, "network");
        read_count(n, "output_channels", c.output_channels, "network");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, {"optimizer", "learning_rate", "momentum", "beta1", "beta2", "epsilon", "epochs", "batch_size",
                       "alpha", "log_every"},
                   "train");
        if (t.contains("optimizer")) {
            std::string opt;
            read(t, "optimizer", opt, "train");
            if (opt != "adam" && opt != "sgd") throw ConfigError("train.optimizer must be 'adam' or 'sgd'");
            c.train.adam = opt == "adam";
        }
        read(t, "learning_rate", c.train.learning_rate, "train");
        read(t, "momentum", c.train.momentum, "train");
        read(t, "beta1", c.train.beta1, "train");
        read(t, "beta2", c.train.beta2, "train");
        read(t, "epsilon", c.train.epsilon, "train");
        read_count(t, "epochs", c.train.epochs, "train");
        read_count(t, "batch_size", c.train.batch_size, "train");
        read(t, "alpha", c.train.alpha, "train");
        read_count(t, "log_every", c.log_every, "train");
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"height", "width", "textures", "min_side", "max_side", "train", "val", "test"}, "data");
        read_count(d, "height", c.data.height, "data");
        read_count(d, "width", c.data.width, "data");
        if (d.contains("textures")) {
            if (!d.at("textures").is_array()) throw ConfigError("data.textures must be an array");
            c.data.textures.clear();
            for (const auto& t : d.at("textures")) {
                check_keys(t, {"mean", "stddev"}, "data.textures[]");
                Texture tex;
                read(t, "mean", tex.mean, "data.textures[]");
                read(t, "stddev", tex.stddev, "data.textures[]");
                c.data.textures.push_back(tex);
            }
        }
        read(d, "min_side", c.data.min_side, "data");
        read(d, "max_side", c.data.max_side, "data");
        read_count(d, "train", c.train_count, "data");
        read_count(d, "val", c.val_count, "data");
        read_count(d, "test", c.test_count, "data");
    }
    if (j.contains("toy")) {
        const auto& t = j.at("toy");
        check_keys(t, {"n1", "n2", "c1", "c2", "sigma"}, "toy");
        read_count(t, "n1", c.toy.n1, "toy");
        read_count(t, "n2", c.toy.n2, "toy");
        for (const char* key : {"c1", "c2"}) {
            if (!t.contains(key)) continue;
            std::vector<double> v;
            read(t, key, v, "toy");
            if (v.size() != 2) throw ConfigError(std::string("toy.") + key + " must have two components");
            double* dst = std::string(key) == "c1" ? c.toy.c1 : c.toy.c2;
            dst[0] = v[0];
            dst[1] = v[1];
        }
        read(t, "sigma", c.toy.sigma, "toy");
    }
    if (j.contains("gradcheck")) {
        const auto& g = j.at("gradcheck");
        check_keys(g, {"networks", "repeats", "step", "tolerance", "dense_tolerance"}, "gradcheck");
        read(g, "networks", c.sweep.networks, "gradcheck");
        read_count(g, "repeats", c.sweep.repeats, "gradcheck");
        read(g, "step", c.sweep.step, "gradcheck");
        read(g, "tolerance", c.sweep.tolerance, "gradcheck");
        read(g, "dense_tolerance", c.sweep.dense_tolerance, "gradcheck");
    }
    if (j.contains("postproc")) {
        const auto& p = j.at("postproc");
        check_keys(p, {"clusters", "min_fraction"}, "postproc");
        read_count(p, "clusters", c.postproc.clusters, "postproc");
        read(p, "min_fraction", c.postproc.min_fraction, "postproc");
    }
    if (j.contains("props")) {
        const auto& p = j.at("props");
        check_keys(p, {"bound_samples", "grid_resolution", "oracle_fixtures", "fd_fields", "sparsity_threshold"},
                   "props");
        read_count(p, "bound_samples", c.props.bound_samples, "props");
        read_count(p, "grid_resolution", c.props.grid_resolution, "props");
        read_count(p, "oracle_fixtures", c.props.oracle_fixtures, "props");
        read_count(p, "fd_fields", c.props.fd_fields, "props");
        read(p, "sparsity_threshold", c.props.sparsity_threshold, "props");
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void ExperimentConfig::validate() const {
    train.validate();
    if (log_every == 0) throw ConfigError("train.log_every must be positive");
    if (losses.empty()) throw ConfigError("losses must not be empty");
    if (fidelities.empty()) throw ConfigError("fidelities must not be empty");
    for (const auto& f : fidelities) {
        if (f != "high" && f != "low") throw ConfigError("fidelity must be 'high' or 'low', got '" + f + "'");
    }
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
        throw ConfigError("flip_probability must lie in [0, 1]");
    }
    if (hidden_channels == 0) throw ConfigError("network.hidden must be positive");

    const std::size_t regions = data.textures.size();
    switch (kind) {
        case ExperimentKind::gradcheck:
            if (sweep.networks.empty() || sweep.repeats == 0) throw ConfigError("gradcheck: empty sweep");
            for (const auto& n : sweep.networks) network_preset(n, 1, 1, 1);
            if (!(sweep.step > 0.0 && sweep.tolerance > 0.0 && sweep.dense_tolerance > 0.0)) {
                throw ConfigError("gradcheck: step and tolerances must be positive");
            }
            return;
        case ExperimentKind::toy_imbalance:
            network_preset(network, 2, hidden_channels, 2);
            if (toy.n1 == 0 || toy.n2 == 0) throw ConfigError("toy: both classes need points");
            if (!(toy.sigma >= 0.0)) throw ConfigError("toy.sigma must be non-negative");
            return;
        case ExperimentKind::saliency:
        case ExperimentKind::props:
            if (regions != 2) throw ConfigError("binary experiments need exactly two textures");
            break;
        case ExperimentKind::multiregion:
            if (regions < 2) throw ConfigError("multiregion needs at least two textures");
            if (output_channels < regions) {
                throw ConfigError("multiregion: output_channels (" + std::to_string(output_channels) +
                                  ") must be at least the region count (" + std::to_string(regions) + ")");
            }
            if (std::find(losses.begin(), losses.end(), LossKind::cace) != losses.end() && regions != 2) {
                throw ConfigError("multiregion: cace needs exactly two regions");
            }
            if (postproc.clusters == 0) throw ConfigError("postproc.clusters must be positive");
            if (!(postproc.min_fraction >= 0.0 && postproc.min_fraction < 1.0)) {
                throw ConfigError("postproc.min_fraction must lie in [0, 1)");
            }
            break;
    }
    network_preset(network, 1, hidden_channels, output_channels);
    if (output_channels < 2) throw ConfigError("network.output_channels must be at least 2");
    if (output_channels < regions) throw ConfigError("network.output_channels is below the region count");
    if (train_count == 0 || test_count == 0) throw ConfigError("data.train and data.test must be positive");
    if (kind == ExperimentKind::saliency && val_count == 0) throw ConfigError("saliency needs validation images");
    if (data.height == 0 || data.width == 0) throw ConfigError("data extent must be positive");
}

Json ExperimentConfig::to_json() const {
    Json losses_json = Json::array();
    for (auto l : losses) losses_json.push_back(to_string(l));
    Json textures = Json::array();
    for (const auto& t : data.textures) textures.push_back({{"mean", t.mean}, {"stddev", t.stddev}});
    return Json{
        {"experiment", to_string(kind)},
        {"seed", seed},
        {"losses", losses_json},
        {"fidelities", fidelities},
        {"flip_probability", flip_probability},
        {"network", {{"name", network}, {"hidden", hidden_channels}, {"output_channels", output_channels}}},
        {"train", train_to_json(train, log_every)},
        {"data",
         {{"height", data.height},
          {"width", data.width},
          {"textures", textures},
          {"min_side", data.min_side},
          {"max_side", data.max_side},
          {"train", train_count},
          {"val", val_count},
          {"test", test_count}}},
        {"toy",
         {{"n1", toy.n1},
          {"n2", toy.n2},
          {"c1", {toy.c1[0], toy.c1[1]}},
          {"c2", {toy.c2[0], toy.c2[1]}},
          {"sigma", toy.sigma}}},
        {"gradcheck",
         {{"networks", sweep.networks},
          {"repeats", sweep.repeats},
          {"step", sweep.step},
          {"tolerance", sweep.tolerance},
          {"dense_tolerance", sweep.dense_tolerance}}},
        {"postproc", {{"clusters", postproc.clusters}, {"min_fraction", postproc.min_fraction}}},
        {"props",
         {{"bound_samples", props.bound_samples},
          {"grid_resolution", props.grid_resolution},
          {"oracle_fixtures", props.oracle_fixtures},
          {"fd_fields", props.fd_fields},
          {"sparsity_threshold", props.sparsity_threshold}}},
    };
}

bool Report::passed() const { return body.contains("status") && body.at("status") == "pass"; }

// ---- training -------------------------------------------------------------

TrainLog train_network(Network& net, const std::vector<Example>& examples, const TrainConfig& cfg,
                       std::size_t log_every) {
    cfg.validate();
    if (examples.empty()) throw DataError("train_network: no examples");
    if (log_every == 0) throw ConfigError("train_network: log_every must be positive");
    OptimizerState state = make_optimizer_state(net);
    TrainLog log;
    std::vector<std::size_t> order(examples.size());
    std::vector<const Example*> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = Rng::stream(cfg.seed, epoch);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
                batch.push_back(&examples[order[i]]);
            }
            auto r = objective_and_gradient(net, cfg.loss, cfg.alpha, batch);
            if (!std::isfinite(r.loss)) throw NumericError("training diverged at step " + std::to_string(log.steps));
            if (log.steps % log_every == 0) log.losses.emplace_back(log.steps, r.loss);
            optimizer_step(net, r.param_grads, cfg, state);
            ++log.steps;
        }
    }
    return log;
}

DescriptorField predict(const Network& net, const Tensor& input) { return DescriptorField(forward(net, input).output); }

// ---- gradcheck ------------------------------------------------------------

Report run_gradcheck(const ExperimentConfig& cfg, const GradientHook& hook) {
    cfg.validate();
    Report report;
    report.csv_header = {"index",      "network",    "loss", "parameters", "regions", "max_relative_error",
                         "dense_only", "pass",       "dense_pass"};
    Json rows = Json::array();
    bool all_pass = true, dense_all_pass = true;
    double worst = 0.0, worst_dense = 0.0;
    std::size_t index = 0, max_params = 0;
    for (const auto& name : cfg.sweep.networks) {
        for (auto loss : cfg.losses) {
            for (std::size_t r = 0; r < cfg.sweep.repeats; ++r, ++index) {
                Rng rng = Rng::stream(cfg.seed, index);
                const std::size_t in = 1 + rng.below(3), hidden = 2 + rng.below(5);
                const std::size_t out = loss == LossKind::cace ? 2 : 3;
                Network net = network_init(network_preset(name, in, hidden, out), rng.next_u64());
                // Zero biases leave units with all-zero inputs exactly on the ReLU kink.
                for (std::size_t off : net.param_offset) {
                    if (off == kNoParameters) continue;
                    for (auto& b : net.params[off + 1].data()) b = rng.normal(0.0, 0.1);
                }
                const bool dense = is_dense_only(net);
                const std::size_t regions = loss == LossKind::cace ? 2 : 2 + rng.below(2);
                const double alpha = loss == LossKind::cas ? rng.uniform(0.1, 0.9) : 0.5;

                std::vector<Example> examples;
                const std::size_t count = 1 + rng.below(2);
                for (std::size_t e = 0; e < count; ++e) {
                    const std::size_t h = dense ? 1 : 3 + rng.below(3), w = 3 + rng.below(4);
                    std::vector<double> x(h * w * in);
                    for (auto& v : x) v = rng.normal();
                    std::vector<int> labels(h * w);
                    for (std::size_t p = 0; p < labels.size(); ++p) {
                        labels[p] = p < regions ? static_cast<int>(p) : static_cast<int>(rng.below(regions));
                    }
                    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
                    examples.push_back({Tensor({h, w, in}, std::move(x)), RegionPartition(h, w, std::move(labels))});
                }
                std::vector<const Example*> batch;
                for (const auto& e : examples) batch.push_back(&e);

                const double err = gradcheck(net, loss, alpha, batch, cfg.sweep.step, hook);
                const bool pass = err <= cfg.sweep.tolerance;
                const bool dense_pass = !dense || err <= cfg.sweep.dense_tolerance;
                all_pass = all_pass && pass;
                dense_all_pass = dense_all_pass && dense_pass;
                worst = std::max(worst, err);
                if (dense) worst_dense = std::max(worst_dense, err);
                max_params = std::max(max_params, net.parameter_count());
                rows.push_back({{"index", index},
                                {"network", name},
                                {"loss", to_string(loss)},
                                {"dense_only", dense},
                                {"parameters", net.parameter_count()},
                                {"regions", regions},
                                {"examples", count},
                                {"max_relative_error", err},
                                {"pass", pass},
                                {"dense_pass", dense_pass}});
                report.csv_rows.push_back({std::to_string(index), name, to_string(loss),
                                           std::to_string(net.parameter_count()), std::to_string(regions), fmt(err),
                                           dense ? "1" : "0", pass ? "1" : "0", dense_pass ? "1" : "0"});
            }
        }
    }
    report.body = Json{{"experiment", "gradcheck"},
                       {"config", cfg.to_json()},
                       {"combinations", index},
                       {"max_parameters", max_params},
                       {"max_relative_error", worst},
                       {"max_relative_error_dense_only", worst_dense},
                       {"tolerance", cfg.sweep.tolerance},
                       {"dense_tolerance", cfg.sweep.dense_tolerance},
                       {"dense_status", dense_all_pass ? "pass" : "fail"},
                       {"results", rows},
                       {"status", all_pass ? "pass" : "fail"}};
    return report;
}

// ---- toy imbalance --------------------------------------------------------

Report run_toy_imbalance(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto data = gen_toy_imbalance(cfg.seed, cfg.toy);
    const Sample& train = data.train.samples.front();
    const Sample& test = data.test.samples.front();
    const std::vector<Example> examples{{train.input, train.partition}};
    const auto specs = network_preset(cfg.network, 2, cfg.hidden_channels, 2);
    const std::uint64_t init_seed = derive(cfg.seed, kInit);

    Report report;
    report.csv_header = {"loss", "predicted", "actual", "count"};
    Json runs = Json::array();
    bool ok = true;
    for (auto loss : cfg.losses) {
        Network net = network_init(specs, init_seed);
        const TrainLog log = train_network(net, examples, arm_train_config(cfg, loss), cfg.log_every);

        // Class-agnostic outputs carry no class identity, so the channel for
        // class two is read off the training set.
        std::size_t class2_channel = 1;
        if (loss != LossKind::ce) {
            const auto means = region_means(predict(net, train.input), train.partition);
            class2_channel = means.rows.at(1, 1) - means.rows.at(0, 1) >= means.rows.at(1, 0) - means.rows.at(0, 0)
                                 ? 1
                                 : 0;
        }
        const DescriptorField out = predict(net, test.input);
        std::vector<int> predicted(out.pixels());
        for (std::size_t p = 0; p < out.pixels(); ++p) {
            const std::size_t top = out.at(p, 1) > out.at(p, 0) ? 1 : 0;
            predicted[p] = top == class2_channel ? 1 : 0;
        }
        const Confusion c = confusion(predicted, test.partition.labels());
        const double class2 = static_cast<double>(c[0][1] + c[1][1]);
        const double class1 = static_cast<double>(c[0][0] + c[1][0]);
        const double recall2 = class2 > 0 ? static_cast<double>(c[1][1]) / class2 : 0.0;
        const double recall1 = class1 > 0 ? static_cast<double>(c[0][0]) / class1 : 0.0;
        Json bounds = bounds_json(log, loss, 2, cfg.train.alpha, ok);
        runs.push_back({{"loss", to_string(loss)},
                        {"confusion", {{c[0][0], c[0][1]}, {c[1][0], c[1][1]}}},
                        {"recall_class1", recall1},
                        {"recall_class2", recall2},
                        {"class2_channel", class2_channel},
                        {"steps", log.steps},
                        {"loss_log", loss_log_json(log)},
                        {"bounds", bounds}});
        for (std::size_t pr = 0; pr < 2; ++pr)
            for (std::size_t ac = 0; ac < 2; ++ac)
                report.csv_rows.push_back({to_string(loss), std::to_string(pr + 1), std::to_string(ac + 1),
                                           std::to_string(c[pr][ac])});
    }
    report.body = Json{{"experiment", "toy-imbalance"},
                       {"config", cfg.to_json()},
                       {"confusion_layout", "rows are predicted class (1, 2), columns are actual class (1, 2)"},
                       {"train_manifest", data.train.manifest.to_json()},
                       {"test_manifest", data.test.manifest.to_json()},
                       {"runs", runs},
                       {"status", ok ? "pass" : "fail"}};
    return report;
}

// ---- saliency -------------------------------------------------------------

Report run_saliency(const ExperimentConfig& cfg) {
    cfg.validate();
    const Splits splits = make_splits(cfg);
    const auto specs = network_preset(cfg.network, splits.full.samples.front().input.shape()[2], cfg.hidden_channels,
                                      cfg.output_channels);
    const std::uint64_t init_seed = derive(cfg.seed, kInit);
    const Dataset low_train = corrupt_low_fidelity(splits.train, cfg.flip_probability, derive(cfg.seed, kCorruption));

    std::vector<Tensor> val_inputs, test_inputs;
    std::vector<BinaryMask> val_masks;
    for (const auto& s : splits.val.samples) {
        val_inputs.push_back(standardize(s.input));
        val_masks.push_back(*s.mask);
    }
    for (const auto& s : splits.test.samples) test_inputs.push_back(standardize(s.input));

    Report report;
    report.csv_header = {"arm", "image", "f_beta", "precision", "recall", "mae", "threshold"};
    report.attachments.emplace_back("dataset_manifest.json", splits.full.manifest.to_json());
    report.attachments.emplace_back("train_manifest_low.json", low_train.manifest.to_json());
    Json arm_reports = Json::array();
    bool ok = true;
    for (const auto& arm : arms(cfg)) {
        const Dataset& train = arm.fidelity == "low" ? low_train : splits.train;
        Network net = network_init(specs, init_seed);
        const TrainLog log = train_network(net, to_examples(train), arm_train_config(cfg, arm.loss), cfg.log_every);

        std::size_t channel = 1;
        Json correlations = nullptr;
        if (arm.loss != LossKind::ce) {
            std::vector<DescriptorField> val_out;
            for (const auto& x : val_inputs) val_out.push_back(predict(net, x));
            correlations = channel_correlations(val_out, val_masks);
            channel = select_channel(val_out, val_masks);
        }

        std::vector<DescriptorField> test_out;
        double f_sum = 0, mae_sum = 0, p_sum = 0, r_sum = 0;
        Json per_image = Json::array();
        for (std::size_t i = 0; i < test_inputs.size(); ++i) {
            test_out.push_back(predict(net, test_inputs[i]));
            const SaliencyMap s = channel_map(test_out.back(), channel);
            const BinaryMask& g = *splits.test.samples[i].mask;
            const BinaryMap b = adaptive_threshold(s);
            const FBeta f = f_beta(b.map, g);
            const double m = mae(s, g);
            f_sum += f.f;
            p_sum += f.precision;
            r_sum += f.recall;
            mae_sum += m;
            per_image.push_back({{"image", i},
                                 {"f_beta", f.f},
                                 {"precision", f.precision},
                                 {"recall", f.recall},
                                 {"mae", m},
                                 {"threshold", b.threshold_used}});
            report.csv_rows.push_back({arm.name(), std::to_string(i), fmt(f.f), fmt(f.precision), fmt(f.recall),
                                       fmt(m), fmt(b.threshold_used)});
            if (i < 2) report.heatmaps.emplace_back(arm.name() + "_test" + std::to_string(i) + ".pgm", s);
        }
        const double n = static_cast<double>(test_inputs.size());
        Json bounds = bounds_json(log, arm.loss, 2, cfg.train.alpha, ok);
        arm_reports.push_back({{"arm", arm.name()},
                               {"loss", to_string(arm.loss)},
                               {"fidelity", arm.fidelity},
                               {"flipped_train_images", train.manifest.flipped_indices.size()},
                               {"channel", channel},
                               {"channel_correlations", correlations},
                               {"f_beta", f_sum / n},
                               {"precision", p_sum / n},
                               {"recall", r_sum / n},
                               {"mae", mae_sum / n},
                               {"mean_max_channel", mean_max_channel(test_out)},
                               {"steps", log.steps},
                               {"loss_log", loss_log_json(log)},
                               {"bounds", bounds},
                               {"per_image", per_image}});
    }
    report.body = Json{{"experiment", "saliency"},
                       {"config", cfg.to_json()},
                       {"dataset_seed", cfg.seed},
                       {"arms", arm_reports},
                       {"status", ok ? "pass" : "fail"}};
    return report;
}

// ---- multi-region ---------------------------------------------------------

Report run_multiregion(const ExperimentConfig& cfg) {
    cfg.validate();
    const Splits splits = make_splits(cfg);
    const std::size_t regions = cfg.data.textures.size();
    const auto specs = network_preset(cfg.network, splits.full.samples.front().input.shape()[2], cfg.hidden_channels,
                                      cfg.output_channels);
    const std::uint64_t init_seed = derive(cfg.seed, kInit);
    const std::uint64_t cluster_seed = derive(cfg.seed, kClustering);
    const Dataset low_train = corrupt_low_fidelity(splits.train, cfg.flip_probability, derive(cfg.seed, kCorruption));

    // Identity pipeline: ground truth scored against itself.
    double id_ri = 0, id_vi = 0, id_cov = 0;
    for (const auto& s : splits.test.samples) {
        id_ri += rand_index(s.partition, s.partition);
        id_vi += variation_of_information(s.partition, s.partition);
        id_cov += covering(s.partition, s.partition);
    }
    const double n = static_cast<double>(splits.test.size());

    Report report;
    report.csv_header = {"arm", "image", "rand_index", "variation_of_information", "covering", "regions",
                         "argmax_rand_index"};
    report.attachments.emplace_back("dataset_manifest.json", splits.full.manifest.to_json());
    report.attachments.emplace_back("train_manifest_low.json", low_train.manifest.to_json());
    Json arm_reports = Json::array();
    bool ok = true;
    for (const auto& arm : arms(cfg)) {
        const Dataset& train = arm.fidelity == "low" ? low_train : splits.train;
        Network net = network_init(specs, init_seed);
        const TrainLog log = train_network(net, to_examples(train), arm_train_config(cfg, arm.loss), cfg.log_every);

        double ri = 0, vi = 0, cov = 0, regions_found = 0, am_ri = 0, am_vi = 0, am_cov = 0;
        Json per_image = Json::array();
        for (std::size_t i = 0; i < splits.test.size(); ++i) {
            const auto& sample = splits.test.samples[i];
            const DescriptorField out = predict(net, standardize(sample.input));
            const std::size_t k = std::min(cfg.postproc.clusters, out.pixels());
            const RegionPartition clustered = kmeans_descriptors(out, k, Rng::stream(cluster_seed, i).next_u64());
            const RegionPartition pred = absorb_small_regions(clustered, out, cfg.postproc.min_fraction);

            std::vector<int> top(out.pixels());
            for (std::size_t p = 0; p < out.pixels(); ++p) {
                auto px = out.pixel(p);
                top[p] = static_cast<int>(std::max_element(px.begin(), px.end()) - px.begin());
            }
            const RegionPartition argmax = RegionPartition::compacted(out.height(), out.width(), top);

            const double r = rand_index(pred, sample.partition);
            const double v = variation_of_information(pred, sample.partition);
            const double c = covering(pred, sample.partition);
            const double ar = rand_index(argmax, sample.partition);
            ri += r;
            vi += v;
            cov += c;
            am_ri += ar;
            am_vi += variation_of_information(argmax, sample.partition);
            am_cov += covering(argmax, sample.partition);
            regions_found += static_cast<double>(pred.region_count());
            per_image.push_back({{"image", i},
                                 {"rand_index", r},
                                 {"variation_of_information", v},
                                 {"covering", c},
                                 {"regions", pred.region_count()},
                                 {"argmax_rand_index", ar}});
            report.csv_rows.push_back({arm.name(), std::to_string(i), fmt(r), fmt(v), fmt(c),
                                       std::to_string(pred.region_count()), fmt(ar)});
        }
        Json bounds = bounds_json(log, arm.loss, regions, cfg.train.alpha, ok);
        arm_reports.push_back({{"arm", arm.name()},
                               {"loss", to_string(arm.loss)},
                               {"fidelity", arm.fidelity},
                               {"flipped_train_images", train.manifest.flipped_indices.size()},
                               {"rand_index", ri / n},
                               {"variation_of_information", vi / n},
                               {"covering", cov / n},
                               {"mean_regions", regions_found / n},
                               {"argmax",
                                {{"rand_index", am_ri / n},
                                 {"variation_of_information", am_vi / n},
                                 {"covering", am_cov / n}}},
                               {"steps", log.steps},
                               {"loss_log", loss_log_json(log)},
                               {"bounds", bounds},
                               {"per_image", per_image}});
    }
    const bool identity_ok = id_ri == n && id_vi == 0.0 && id_cov == n;
    ok = ok && identity_ok;
    report.body = Json{{"experiment", "multiregion"},
                       {"config", cfg.to_json()},
                       {"regions", regions},
                       {"identity_check",
                        {{"rand_index", id_ri / n},
                         {"variation_of_information", id_vi / n},
                         {"covering", id_cov / n},
                         {"pass", identity_ok}}},
                       {"arms", arm_reports},
                       {"status", ok ? "pass" : "fail"}};
    return report;
}

Report run_experiment(const ExperimentConfig& cfg) {
    switch (cfg.kind) {
        case ExperimentKind::gradcheck: return run_gradcheck(cfg);
        case ExperimentKind::toy_imbalance: return run_toy_imbalance(cfg);
        case ExperimentKind::saliency: return run_saliency(cfg);
        case ExperimentKind::multiregion: return run_multiregion(cfg);
        case ExperimentKind::props: return run_props(cfg);
    }
    throw ConfigError("unknown experiment kind");
}

// ---- output ---------------------------------------------------------------

void render_heatmap(const SaliencyMap& s, const std::filesystem::path& path) { pgm_write(path, s, 255); }

void write_report(const Report& report, const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("output directory does not exist: " + dir.string());
    auto open = [](const std::filesystem::path& p) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw IoError("cannot write " + p.string());
        return out;
    };
    {
        auto out = open(dir / "report.json");
        out << report.body.dump(2) << '\n';
    }
    {
        auto out = open(dir / "metrics.csv");
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
            out << '\n';
        };
        line(report.csv_header);
        for (const auto& row : report.csv_rows) line(row);
    }
    for (const auto& [name, map] : report.heatmaps) render_heatmap(map, dir / name);
    for (const auto& [name, doc] : report.attachments) {
        auto out = open(dir / name);
        out << doc.dump(2) << '\n';
    }
}

} // namespace casseg
