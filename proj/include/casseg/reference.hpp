#pragma once

// Direct-definition reference implementations of the metrics. They are slow
// on purpose: pair enumeration and explicit set arithmetic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "casseg/fields.hpp"

namespace casseg::reference {

inline double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    double agree = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            agree += (a[i] == a[j]) == (b[i] == b[j]);
            total += 1;
        }
    }
    return total == 0 ? 1.0 : agree / total;
}

inline double variation_of_information(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    std::map<int, double> pa, pb;
    std::map<std::pair<int, int>, double> pab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        pa[a[i]] += 1 / n;
        pb[b[i]] += 1 / n;
        pab[{a[i], b[i]}] += 1 / n;
    }
    double ha = 0, hb = 0, mi = 0;
    for (auto& [k, v] : pa) ha -= v * std::log(v);
    for (auto& [k, v] : pb) hb -= v * std::log(v);
    for (auto& [k, v] : pab) mi += v * std::log(v / (pa[k.first] * pb[k.second]));
    return ha + hb - 2 * mi;
}

inline double covering(const std::vector<int>& pred, const std::vector<int>& gt) {
    std::map<int, std::set<std::size_t>> rp, rg;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        rp[pred[i]].insert(i);
        rg[gt[i]].insert(i);
    }
    double score = 0;
    for (auto& [gl, gs] : rg) {
        double best = 0;
        for (auto& [pl, ps] : rp) {
            std::size_t inter = 0;
            for (auto x : gs) inter += ps.count(x);
            const double uni = static_cast<double>(gs.size() + ps.size() - inter);
            best = std::max(best, inter / uni);
        }
        score += static_cast<double>(gs.size()) / static_cast<double>(pred.size()) * best;
    }
    return score;
}

struct PR {
    double f, p, r;
};

inline PR f_beta(const std::vector<std::uint8_t>& b, const std::vector<std::uint8_t>& g, double beta_sq) {
    std::set<std::size_t> pred, truth;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[i]) pred.insert(i);
        if (g[i]) truth.insert(i);
    }
    if (pred.empty() && truth.empty()) return {1, 1, 1};
    double tp = 0;
    for (auto i : pred) tp += truth.count(i);
    const double p = pred.empty() ? 0 : tp / static_cast<double>(pred.size());
    const double r = truth.empty() ? 0 : tp / static_cast<double>(truth.size());
    const double f = (p == 0 && r == 0) ? 0 : (1 + beta_sq) * p * r / (beta_sq * p + r);
    return {f, p, r};
}

inline double mae(const std::vector<double>& s, const std::vector<std::uint8_t>& g) {
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) total += std::abs(s[i] - static_cast<double>(g[i]));
    return total / static_cast<double>(s.size());
}

} // namespace casseg::reference
