#pragma once

#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ptlab {

namespace detail {

template <typename T>
void check_aligned(const std::vector<const param_set<T> *> & models) {
    if (models.empty()) throw error(errc::argument, "merge: no models given");
    const param_set<T> & ref = *models[0];
    for (size_t i = 1; i < models.size(); i++) {
        const param_set<T> & m = *models[i];
        if (!(m.config == ref.config)) throw_dim("merge: model " + std::to_string(i) + " config differs");
        if (m.tensors.size() != ref.tensors.size()) throw_dim("merge: model tensor counts differ");
        for (size_t t = 0; t < ref.tensors.size(); t++) {
            if (m.tensors[t].first != ref.tensors[t].first ||
                !m.tensors[t].second.same_shape(ref.tensors[t].second)) {
                throw_dim("merge: tensor " + ref.tensors[t].first + " is not aligned across models");
            }
        }
    }
}

} // namespace detail

// weighted average with weights normalized to sum to one
template <typename T>
param_set<T> merge_linear(const std::vector<const param_set<T> *> & models, std::vector<double> weights) {
    if (models.size() < 2) throw error(errc::argument, "linear merge needs at least 2 models");
    detail::check_aligned(models);
    if (weights.size() != models.size()) {
        throw error(errc::argument, "linear merge: " + std::to_string(weights.size()) + " weights for " +
                    std::to_string(models.size()) + " models");
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw error(errc::argument, "linear merge: weights must be positive");
        wsum += w;
    }
    for (double & w : weights) w /= wsum;

    param_set<T> out = *models[0];
    for (size_t t = 0; t < out.tensors.size(); t++) {
        tensor<T> & dst = out.tensors[t].second;
        for (int64_t i = 0; i < dst.numel(); i++) {
            double acc = 0.0;
            for (size_t m = 0; m < models.size(); m++) {
                acc += weights[m] * (double) models[m]->tensors[t].second.at(i);
            }
            dst.at(i) = (T) acc;
        }
    }
    return out;
}

// Task-vector merge: per model, keep only the top density fraction of task
// coordinates by magnitude (measured across the whole model), elect a sign
// per coordinate by total magnitude, then average the agreeing entries.
template <typename T>
param_set<T> merge_ties(const std::vector<const param_set<T> *> & models, const param_set<T> & anchor,
                        double density) {
    if (models.empty()) throw error(errc::argument, "ties merge needs at least 1 model");
    if (!(density > 0.0) || density > 1.0) throw error(errc::argument, "ties merge: density must lie in (0, 1]");
    std::vector<const param_set<T> *> all = models;
    all.push_back(&anchor);
    detail::check_aligned(all);

    const size_t n_models = models.size();
    const int64_t n_coords = anchor.n_params();

    // flattened task vectors, trimmed in place
    std::vector<std::vector<double>> tau(n_models, std::vector<double>((size_t) n_coords));
    for (size_t m = 0; m < n_models; m++) {
        int64_t at = 0;
        for (size_t t = 0; t < anchor.tensors.size(); t++) {
            const tensor<T> & mt = models[m]->tensors[t].second;
            const tensor<T> & an = anchor.tensors[t].second;
            for (int64_t i = 0; i < an.numel(); i++) tau[m][(size_t) at++] = (double) mt.at(i) - (double) an.at(i);
        }
        if (density < 1.0) {
            std::vector<int64_t> order((size_t) n_coords);
            for (int64_t i = 0; i < n_coords; i++) order[(size_t) i] = i;
            std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
                const double ma = std::abs(tau[m][(size_t) a]), mb = std::abs(tau[m][(size_t) b]);
                if (ma != mb) return ma > mb;
                return a < b; // deterministic tie order
            });
            const int64_t keep = std::max<int64_t>(1, (int64_t) std::llround(density * (double) n_coords));
            std::vector<double> trimmed((size_t) n_coords, 0.0);
            for (int64_t r = 0; r < keep && r < n_coords; r++) {
                trimmed[(size_t) order[(size_t) r]] = tau[m][(size_t) order[(size_t) r]];
            }
            tau[m] = std::move(trimmed);
        }
    }

    param_set<T> out = anchor;
    int64_t at = 0;
    for (size_t t = 0; t < out.tensors.size(); t++) {
        tensor<T> & dst = out.tensors[t].second;
        for (int64_t i = 0; i < dst.numel(); i++, at++) {
            double pos = 0.0, neg = 0.0;
            for (size_t m = 0; m < n_models; m++) {
                const double v = tau[m][(size_t) at];
                if (v > 0.0) pos += v;
                else neg -= v;
            }
            const bool positive = pos >= neg; // ties elect positive
            double sum = 0.0;
            int64_t agreeing = 0;
            for (size_t m = 0; m < n_models; m++) {
                const double v = tau[m][(size_t) at];
                if (v == 0.0 || (v > 0.0) != positive) continue;
                sum += v;
                agreeing++;
            }
            if (agreeing > 0) dst.at(i) = (T) ((double) dst.at(i) + sum / (double) agreeing);
        }
    }
    return out;
}

template <typename T>
struct stock_result {
    param_set<T> merged;
    std::vector<std::string> warnings;
};

// Per-tensor interpolation toward the fine-tuned average, with the ratio set
// by the mean pairwise angle between task vectors: t = k cos / (1 + (k-1) cos),
// clamped to [0, 1]. A zero-length task vector pins that tensor to the anchor.
template <typename T>
stock_result<T> merge_model_stock(const std::vector<const param_set<T> *> & models, const param_set<T> & anchor) {
    if (models.size() < 2) throw error(errc::argument, "model stock needs at least 2 models");
    std::vector<const param_set<T> *> all = models;
    all.push_back(&anchor);
    detail::check_aligned(all);

    const size_t k = models.size();
    stock_result<T> res;
    res.merged = anchor;

    for (size_t t = 0; t < anchor.tensors.size(); t++) {
        const std::string & name = anchor.tensors[t].first;
        const tensor<T> & an = anchor.tensors[t].second;
        const int64_t n = an.numel();

        std::vector<std::vector<double>> tau(k, std::vector<double>((size_t) n));
        std::vector<double> norms(k, 0.0);
        bool degenerate = false;
        for (size_t m = 0; m < k; m++) {
            double ss = 0.0;
            for (int64_t i = 0; i < n; i++) {
                const double v = (double) models[m]->tensors[t].second.at(i) - (double) an.at(i);
                tau[m][(size_t) i] = v;
                ss += v * v;
            }
            norms[m] = std::sqrt(ss);
            if (norms[m] == 0.0) degenerate = true;
        }

        double ratio = 0.0;
        if (degenerate) {
            res.warnings.push_back("model stock: zero-length task vector for " + name + "; keeping anchor");
        } else {
            double cos_sum = 0.0;
            int64_t pairs = 0;
            for (size_t a = 0; a < k; a++) {
                for (size_t b = a + 1; b < k; b++) {
                    double dot = 0.0;
                    for (int64_t i = 0; i < n; i++) dot += tau[a][(size_t) i] * tau[b][(size_t) i];
                    cos_sum += dot / (norms[a] * norms[b]);
                    pairs++;
                }
            }
            double cos = std::clamp(cos_sum / (double) pairs, -1.0, 1.0);
            const double denom = 1.0 + ((double) k - 1.0) * cos;
            ratio = denom > 0.0 ? std::clamp((double) k * cos / denom, 0.0, 1.0) : 0.0;
        }

        tensor<T> & dst = res.merged.tensors[t].second;
        for (int64_t i = 0; i < n; i++) {
            double mean_tau = 0.0;
            for (size_t m = 0; m < k; m++) mean_tau += tau[m][(size_t) i];
            mean_tau /= (double) k;
            dst.at(i) = (T) ((double) an.at(i) + ratio * mean_tau);
        }
    }
    return res;
}

// a merge described as data: method, input checkpoints, method knobs
struct merge_recipe {
    std::string method; // "linear", "ties", "model_stock"
    std::vector<std::string> models;
    std::string anchor;
    std::vector<double> weights;
    double density = 1.0;
};

merge_recipe load_merge_recipe(const std::string & path);

// loads every checkpoint named by the recipe, merges, writes to out_dir;
// returns warnings worth surfacing
std::vector<std::string> run_merge_recipe(const merge_recipe & recipe, const std::string & out_dir);

} // namespace ptlab
