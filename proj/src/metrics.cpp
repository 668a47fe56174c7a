#include "casseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "casseg/errors.hpp"

namespace casseg {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": " + std::to_string(a) + " vs " + std::to_string(b) + " pixels");
}

// Joint label counts of two partitions, row-major [p label][q label].
struct Contingency {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> counts;
    std::vector<double> row_sums;
    std::vector<double> col_sums;
    double n = 0.0;

    Contingency(const RegionPartition& p, const RegionPartition& q)
        : rows(p.region_count()), cols(q.region_count()), counts(rows * cols, 0.0), row_sums(rows, 0.0),
          col_sums(cols, 0.0), n(static_cast<double>(p.pixels())) {
        for (std::size_t i = 0; i < p.pixels(); ++i) {
            const auto a = static_cast<std::size_t>(p.label(i)), b = static_cast<std::size_t>(q.label(i));
            counts[a * cols + b] += 1.0;
            row_sums[a] += 1.0;
            col_sums[b] += 1.0;
        }
    }
};

double pairs(double k) { return k * (k - 1.0) / 2.0; }

double entropy_term(double count, double n) { return count > 0.0 ? -(count / n) * std::log(count / n) : 0.0; }

} // namespace

BinaryMap adaptive_threshold(const SaliencyMap& s) {
    if (s.values.empty()) throw ShapeError("adaptive_threshold: empty map");
    double sum = 0.0;
    for (double v : s.values) sum += v;
    const double t = 2.0 * sum / static_cast<double>(s.values.size());
    std::vector<std::uint8_t> b(s.values.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = s.values[i] > t ? 1 : 0;
    return BinaryMap{BinaryMask(s.height, s.width, std::move(b)), t};
}

FBeta f_beta(const BinaryMask& b, const BinaryMask& g, double beta_sq) {
    if (b.height != g.height || b.width != g.width) throw ShapeError("f_beta: map and mask differ in size");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < b.values.size(); ++i) {
        const bool pred = b.values[i] != 0, truth = g.values[i] != 0;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
    }
    if (tp + fp == 0 && tp + fn == 0) return FBeta{1.0, 1.0, 1.0};
    FBeta out;
    out.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double denom = beta_sq * out.precision + out.recall;
    out.f = denom > 0.0 ? (1.0 + beta_sq) * out.precision * out.recall / denom : 0.0;
    return out;
}

double mae(const SaliencyMap& s, const BinaryMask& g) {
    if (s.height != g.height || s.width != g.width) throw ShapeError("mae: map and mask differ in size");
    if (s.values.empty()) throw ShapeError("mae: empty map");
    double sum = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) sum += std::abs(s.values[i] - g.values[i]);
    return sum / static_cast<double>(s.values.size());
}

std::vector<double> channel_correlations(const std::vector<DescriptorField>& fields,
                                         const std::vector<BinaryMask>& masks) {
    if (fields.empty()) throw DataError("select_channel: empty validation set");
    if (fields.size() != masks.size()) throw ShapeError("select_channel: fields and masks differ in count");
    const std::size_t m = fields.front().channels();
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].channels() != m) throw ShapeError("select_channel: channel counts differ");
        require_same_size(fields[i].pixels(), masks[i].pixels(), "select_channel");
    }

    double n = 0, mask_sum = 0;
    std::vector<double> chan_sum(m, 0.0);
    for (std::size_t i = 0; i < fields.size(); ++i) {
        for (std::size_t p = 0; p < fields[i].pixels(); ++p) {
            n += 1;
            mask_sum += masks[i].values[p];
            for (std::size_t c = 0; c < m; ++c) chan_sum[c] += fields[i].at(p, c);
        }
    }
    const double mask_mean = mask_sum / n;
    std::vector<double> cov(m, 0.0), var(m, 0.0);
    double mask_var = 0.0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        for (std::size_t p = 0; p < fields[i].pixels(); ++p) {
            const double dg = masks[i].values[p] - mask_mean;
            mask_var += dg * dg;
            for (std::size_t c = 0; c < m; ++c) {
                const double dc = fields[i].at(p, c) - chan_sum[c] / n;
                cov[c] += dc * dg;
                var[c] += dc * dc;
            }
        }
    }
    std::vector<double> corr(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
        if (var[c] > 0.0 && mask_var > 0.0) corr[c] = cov[c] / std::sqrt(var[c] * mask_var);
    }
    return corr;
}

std::size_t select_channel(const std::vector<DescriptorField>& fields, const std::vector<BinaryMask>& masks) {
    const auto corr = channel_correlations(fields, masks);
    std::size_t best = 0;
    for (std::size_t c = 1; c < corr.size(); ++c) {
        if (corr[c] > corr[best]) best = c;
    }
    return best;
}

Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (predicted.size() != actual.size()) throw ShapeError("confusion: label lists differ in length");
    Confusion c{};
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] < 0 || predicted[i] > 1 || actual[i] < 0 || actual[i] > 1) {
            throw LabelError("confusion: labels must be 0 or 1");
        }
        ++c[static_cast<std::size_t>(predicted[i])][static_cast<std::size_t>(actual[i])];
    }
    return c;
}

double rand_index(const RegionPartition& p, const RegionPartition& q) {
    require_same_size(p.pixels(), q.pixels(), "rand_index");
    const Contingency t(p, q);
    const double total = pairs(t.n);
    if (total == 0.0) return 1.0;
    double both = 0, in_p = 0, in_q = 0;
    for (double c : t.counts) both += pairs(c);
    for (double r : t.row_sums) in_p += pairs(r);
    for (double c : t.col_sums) in_q += pairs(c);
    // Agreements: together in both, plus separated in both.
    const double agree = both + (total - in_p - in_q + both);
    return agree / total;
}

double variation_of_information(const RegionPartition& p, const RegionPartition& q) {
    require_same_size(p.pixels(), q.pixels(), "variation_of_information");
    const Contingency t(p, q);
    double hp = 0, hq = 0, hpq = 0;
    for (double r : t.row_sums) hp += entropy_term(r, t.n);
    for (double c : t.col_sums) hq += entropy_term(c, t.n);
    for (double c : t.counts) hpq += entropy_term(c, t.n);
    // I = H(P) + H(Q) - H(P,Q), so VI = 2 H(P,Q) - H(P) - H(Q).
    return std::max(0.0, 2.0 * hpq - hp - hq);
}

double covering(const RegionPartition& pred, const RegionPartition& gt) {
    require_same_size(pred.pixels(), gt.pixels(), "covering");
    const Contingency t(gt, pred);
    double score = 0.0;
    for (std::size_t r = 0; r < t.rows; ++r) {
        double best = 0.0;
        for (std::size_t c = 0; c < t.cols; ++c) {
            const double inter = t.counts[r * t.cols + c];
            if (inter == 0.0) continue;
            best = std::max(best, inter / (t.row_sums[r] + t.col_sums[c] - inter));
        }
        score += t.row_sums[r] / t.n * best;
    }
    return score;
}

} // namespace casseg
