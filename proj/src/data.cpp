#include "casseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "casseg/errors.hpp"
#include "casseg/random.hpp"

namespace casseg {

nlohmann::ordered_json Manifest::to_json() const {
    nlohmann::ordered_json j;
    j["generator"] = generator;
    j["seed"] = seed;
    j["params"] = params;
    j["flipped_indices"] = flipped_indices;
    return j;
}

Manifest Manifest::from_json(const nlohmann::ordered_json& j) {
    Manifest m;
    try {
        m.generator = j.at("generator").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.params = j.value("params", nlohmann::ordered_json::object());
        m.flipped_indices = j.value("flipped_indices", std::vector<std::size_t>{});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    return m;
}

namespace {

Dataset toy_draw(Rng rng, const ToyImbalanceParams& p, std::uint64_t seed, const char* which) {
    const std::size_t n = p.n1 + p.n2;
    std::vector<double> points(n * 2);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool second = i >= p.n1;
        const double* c = second ? p.c2 : p.c1;
        points[2 * i] = rng.normal(c[0], p.sigma);
        points[2 * i + 1] = rng.normal(c[1], p.sigma);
        labels[i] = second ? 1 : 0;
    }
    Dataset ds;
    ds.samples.push_back(Sample{Tensor({1, n, 2}, std::move(points)), RegionPartition(1, n, std::move(labels)), std::nullopt});
    ds.manifest.generator = "toy-imbalance";
    ds.manifest.seed = seed;
    ds.manifest.params = {{"set", which},       {"n1", p.n1},       {"n2", p.n2},
                          {"c1", {p.c1[0], p.c1[1]}}, {"c2", {p.c2[0], p.c2[1]}}, {"sigma", p.sigma}};
    return ds;
}

std::vector<int> draw_rectangles(Rng& rng, const SegmentationParams& p) {
    const std::size_t h = p.height, w = p.width, n = p.textures.size();
    std::vector<int> labels(h * w, 0);
    auto side = [&](std::size_t extent) {
        const double frac = rng.uniform(p.min_side, p.max_side);
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(frac * static_cast<double>(extent))), 1, extent);
    };
    for (std::size_t r = 1; r < n; ++r) {
        const std::size_t rh = side(h), rw = side(w);
        const std::size_t top = rng.below(h - rh + 1), left = rng.below(w - rw + 1);
        for (std::size_t y = top; y < top + rh; ++y)
            for (std::size_t x = left; x < left + rw; ++x) labels[y * w + x] = static_cast<int>(r);
    }
    return labels;
}

std::vector<std::size_t> label_counts(const std::vector<int>& labels, std::size_t n) {
    std::vector<std::size_t> counts(n, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    return counts;
}

std::vector<int> build_partition(Rng& rng, const SegmentationParams& p) {
    const std::size_t n = p.textures.size();
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto labels = draw_rectangles(rng, p);
        const auto counts = label_counts(labels, n);
        if (std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; })) return labels;
    }
    // Rectangles kept overwriting each other: hand each missing label a pixel
    // taken from a region that can spare one.
    auto labels = draw_rectangles(rng, p);
    auto counts = label_counts(labels, n);
    for (std::size_t r = 0; r < n; ++r) {
        while (counts[r] == 0) {
            const std::size_t px = rng.below(labels.size());
            const auto owner = static_cast<std::size_t>(labels[px]);
            if (counts[owner] < 2) continue;
            --counts[owner];
            labels[px] = static_cast<int>(r);
            ++counts[r];
        }
    }
    return labels;
}

std::vector<int> random_non_identity_permutation(Rng& rng, std::size_t n) {
    std::vector<int> perm(n);
    for (;;) {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        for (std::size_t i = 0; i < n; ++i) {
            if (perm[i] != static_cast<int>(i)) return perm;
        }
    }
}

double bilinear_sample(const Tensor& img, double sy, double sx, std::size_t c) {
    const std::size_t h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
    auto at = [&](std::size_t y, std::size_t x) { return img[(y * w + x) * ch + c]; };
    const double top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
    const double bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
    return top + fy * (bottom - top);
}

std::size_t nearest_source(std::size_t dst, std::size_t in, std::size_t out) {
    const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out);
    return std::min(static_cast<std::size_t>(s), in - 1);
}

} // namespace

ToyImbalance gen_toy_imbalance(std::uint64_t seed, const ToyImbalanceParams& params) {
    if (params.n1 == 0 || params.n2 == 0) throw ParameterError("gen_toy_imbalance: both classes need points");
    if (!(params.sigma > 0.0)) throw ParameterError("gen_toy_imbalance: sigma must be positive");
    return ToyImbalance{toy_draw(Rng::stream(seed, 0), params, seed, "train"),
                        toy_draw(Rng::stream(seed, 1), params, seed, "test")};
}

Dataset gen_synthetic_segmentation(std::uint64_t seed, const SegmentationParams& params) {
    const std::size_t n = params.textures.size();
    if (n < 2) throw ParameterError("gen_synthetic_segmentation: at least two regions required");
    if (params.height == 0 || params.width == 0) throw ParameterError("gen_synthetic_segmentation: empty image");
    if (n > params.height * params.width) {
        throw GenerationError("gen_synthetic_segmentation: " + std::to_string(n) + " regions exceed " +
                              std::to_string(params.height * params.width) + " pixels");
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (params.textures[i].mean == params.textures[j].mean) {
                throw ParameterError("gen_synthetic_segmentation: region means must be pairwise distinct");
            }
    if (!(params.min_side > 0.0 && params.min_side <= params.max_side && params.max_side <= 1.0)) {
        throw ParameterError("gen_synthetic_segmentation: invalid rectangle side range");
    }

    Dataset ds;
    ds.manifest.generator = "synthetic-segmentation";
    ds.manifest.seed = seed;
    nlohmann::ordered_json textures = nlohmann::ordered_json::array();
    for (const auto& t : params.textures) textures.push_back({{"mean", t.mean}, {"std", t.stddev}});
    ds.manifest.params = {{"count", params.count}, {"height", params.height},     {"width", params.width},
                          {"textures", textures},  {"min_side", params.min_side}, {"max_side", params.max_side}};

    for (std::size_t i = 0; i < params.count; ++i) {
        Rng rng = Rng::stream(seed, i);
        auto labels = build_partition(rng, params);
        std::vector<double> pixels(labels.size());
        for (std::size_t p = 0; p < labels.size(); ++p) {
            const Texture& t = params.textures[static_cast<std::size_t>(labels[p])];
            pixels[p] = std::clamp(t.stddev > 0.0 ? rng.normal(t.mean, t.stddev) : t.mean, 0.0, 1.0);
        }
        Sample s{Tensor({params.height, params.width, 1}, std::move(pixels)),
                 RegionPartition(params.height, params.width, labels), std::nullopt};
        if (n == 2) s.mask = mask_from_partition(s.partition);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Dataset corrupt_low_fidelity(const Dataset& ds, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("corrupt_low_fidelity: p must lie in [0, 1]");
    Dataset out = ds;
    out.manifest.flipped_indices.clear();
    out.manifest.params["corruption"] = {{"flip_probability", p}, {"seed", seed}};
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        Rng rng = Rng::stream(seed, i);
        if (!rng.bernoulli(p)) continue;
        Sample& s = out.samples[i];
        const std::size_t n = s.partition.region_count();
        if (n < 2) continue;
        std::vector<int> perm;
        if (s.mask) {
            s.mask = s.mask->inverted();
            perm = {1, 0};
        } else {
            perm = random_non_identity_permutation(rng, n);
        }
        std::vector<int> labels = s.partition.labels();
        for (auto& l : labels) l = perm[static_cast<std::size_t>(l)];
        s.partition = RegionPartition(s.partition.height(), s.partition.width(), std::move(labels));
        out.manifest.flipped_indices.push_back(i);
    }
    return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ShapeError("resize: zero-extent target");
    if (image.rank() != 2 && image.rank() != 3) throw ShapeError("resize: [H, W] or [H, W, C] image required");
    if (image.size() == 0) throw ShapeError("resize: empty image");
    const bool flat = image.rank() == 2;
    const Tensor img = flat ? Tensor({image.shape()[0], image.shape()[1], 1},
                                     std::vector<double>(image.data().begin(), image.data().end()))
                            : image;
    const std::size_t ih = img.shape()[0], iw = img.shape()[1], ch = img.shape()[2];
    const double sy = static_cast<double>(ih) / static_cast<double>(height);
    const double sx = static_cast<double>(iw) / static_cast<double>(width);
    std::vector<double> out(height * width * ch);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
            const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
            for (std::size_t c = 0; c < ch; ++c) out[(y * width + x) * ch + c] = bilinear_sample(img, src_y, src_x, c);
        }
    }
    return flat ? Tensor({height, width}, std::move(out)) : Tensor({height, width, ch}, std::move(out));
}

Tensor standardize(const Tensor& image) {
    if (image.size() == 0) throw ShapeError("standardize: empty image");
    const double n = static_cast<double>(image.size());
    // Offsets from the first value keep the mean of a constant image exact.
    const double anchor = image[0];
    double offset = 0.0;
    for (double v : image.data()) offset += v - anchor;
    const double mean = anchor + offset / n;
    double var = 0.0;
    for (double v : image.data()) var += (v - mean) * (v - mean);
    const double sd = std::max(std::sqrt(var / n), 1e-8);
    std::vector<double> out(image.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (image[i] - mean) / sd;
    return Tensor(image.shape(), std::move(out));
}

Tensor preprocess(const Tensor& image, std::size_t height, std::size_t width) {
    return standardize(resize_bilinear(image, height, width));
}

RegionPartition resize_nearest(const RegionPartition& partition, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ShapeError("resize: zero-extent target");
    std::vector<int> labels(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = nearest_source(y, partition.height(), height);
        for (std::size_t x = 0; x < width; ++x) {
            labels[y * width + x] = partition.label(sy * partition.width() + nearest_source(x, partition.width(), width));
        }
    }
    // Downsampling can drop a small region entirely.
    return RegionPartition::compacted(height, width, labels);
}

BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ShapeError("resize: zero-extent target");
    std::vector<std::uint8_t> v(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = nearest_source(y, mask.height, height);
        for (std::size_t x = 0; x < width; ++x) {
            v[y * width + x] = mask.values[sy * mask.width + nearest_source(x, mask.width, width)];
        }
    }
    return BinaryMask(height, width, std::move(v));
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_ratio, double test_ratio, std::uint64_t seed) {
    if (ds.samples.empty()) throw DataError("split: empty dataset");
    if (!(train_ratio > 0.0 && test_ratio >= 0.0)) throw DataError("split: ratios must be positive");
    const std::size_t n = ds.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(splitmix64(seed));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const auto test_count = static_cast<std::size_t>(
        std::lround(static_cast<double>(n) * test_ratio / (train_ratio + test_ratio)));
    const std::size_t train_count = n - std::min(test_count, n);

    auto subset = [&](std::size_t begin, std::size_t end, const char* which) {
        Dataset part;
        part.manifest = ds.manifest;
        part.manifest.flipped_indices.clear();
        part.manifest.params["split"] = {{"part", which}, {"train", train_ratio}, {"test", test_ratio}, {"seed", seed}};
        nlohmann::ordered_json source = nlohmann::ordered_json::array();
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t src = order[k];
            if (std::find(ds.manifest.flipped_indices.begin(), ds.manifest.flipped_indices.end(), src) !=
                ds.manifest.flipped_indices.end()) {
                part.manifest.flipped_indices.push_back(part.samples.size());
            }
            source.push_back(src);
            part.samples.push_back(ds.samples[src]);
        }
        part.manifest.params["source_indices"] = source;
        return part;
    };
    return {subset(0, train_count, "train"), subset(train_count, n, "test")};
}

} // namespace casseg
