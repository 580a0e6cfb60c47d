#pragma once

#include "gradcheck.hpp"
#include "model.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

namespace ptlab {

struct opt_config {
    double beta1        = 0.9;
    double beta2        = 0.95;
    double eps          = 1e-8;
    double weight_decay = 0.0;
    double clip_norm    = 1.0;   // 0 disables clipping

    double  peak_lr      = 0.0;
    double  min_lr       = 0.0;
    int64_t warmup_iters = 0;
    int64_t total_iters  = 0;

    // scales the step's learning rate by sqrt(batch_tokens / baseline_batch_tokens)
    bool    alr_enabled           = false;
    int64_t baseline_batch_tokens = 2048;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw_config("optimizer: betas must lie in [0, 1)");
        }
        if (!(eps > 0.0)) throw_config("optimizer: eps must be positive");
        if (weight_decay < 0.0) throw_config("optimizer: weight_decay must be non-negative");
        if (clip_norm < 0.0) throw_config("optimizer: clip_norm must be non-negative");
        if (!(peak_lr > 0.0)) throw_config("optimizer: peak_lr must be positive");
        if (min_lr < 0.0 || min_lr > peak_lr) throw_config("optimizer: need 0 <= min_lr <= peak_lr");
        if (warmup_iters < 0) throw_config("optimizer: warmup_iters must be non-negative");
        if (total_iters < 1) throw_config("optimizer: total_iters must be at least 1");
        if (total_iters < warmup_iters) throw_config("optimizer: total_iters must cover warmup");
        if (baseline_batch_tokens < 1) throw_config("optimizer: baseline_batch_tokens must be positive");
    }
};

// linear warmup from zero to peak_lr over warmup_iters, then cosine decay to
// min_lr at total_iters; steps past the schedule end are refused
inline double cosine_lr(int64_t step, const opt_config & cfg) {
    cfg.validate();
    if (step < 0) throw error(errc::argument, "cosine_lr: negative step");
    if (step > cfg.total_iters) {
        throw error(errc::argument, "cosine_lr: schedule exhausted at step " + std::to_string(step) +
                    " of " + std::to_string(cfg.total_iters));
    }
    if (step < cfg.warmup_iters) {
        return cfg.peak_lr * (double) step / (double) cfg.warmup_iters;
    }
    if (cfg.total_iters == cfg.warmup_iters) return cfg.peak_lr;
    const double progress = (double) (step - cfg.warmup_iters) / (double) (cfg.total_iters - cfg.warmup_iters);
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(progress * M_PI));
}

inline double adaptive_lr(double base_lr, int64_t batch_tokens, const opt_config & cfg) {
    if (batch_tokens < 1) {
        throw error(errc::argument, "adaptive_lr: batch_tokens must be positive, got " +
                    std::to_string(batch_tokens));
    }
    if (!cfg.alr_enabled) return base_lr;
    return base_lr * std::sqrt((double) batch_tokens / (double) cfg.baseline_batch_tokens);
}

// global-norm clip across all gradients together; returns the pre-clip norm
template <typename T>
double clip_grads(std::map<std::string, tensor<T>> & grads, double clip_norm) {
    double ss = 0.0;
    for (auto & [name, g] : grads) {
        for (T v : g.data) ss += (double) v * (double) v;
    }
    const double norm = std::sqrt(ss);
    if (!std::isfinite(norm)) throw error(errc::numeric, "clip_grads: non-finite gradient norm");
    if (clip_norm > 0.0 && norm > clip_norm) {
        const T s = (T) (clip_norm / norm);
        for (auto & [name, g] : grads) g.scale_(s);
    }
    return norm;
}

template <typename T>
struct opt_state {
    int64_t step = 0;
    named_tensors<T> m;
    named_tensors<T> v;

    void init_like(const param_set<T> & p) {
        step = 0;
        m.clear();
        v.clear();
        for (auto & [name, t] : p.tensors) {
            m.emplace_back(name, tensor<T>(t.shape));
            v.emplace_back(name, tensor<T>(t.shape));
        }
    }
};

// bias-corrected AdamW with decoupled weight decay
template <typename T>
void adamw_step(param_set<T> & params, const std::map<std::string, tensor<T>> & grads,
                opt_state<T> & state, double lr, const opt_config & cfg) {
    cfg.validate();
    if (state.m.empty()) state.init_like(params);
    if (state.m.size() != params.tensors.size()) {
        throw_dim("adamw: optimizer state does not match parameter count");
    }
    const int64_t t = state.step + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, (double) t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, (double) t);

    for (size_t pi = 0; pi < params.tensors.size(); pi++) {
        auto & [name, p] = params.tensors[pi];
        if (state.m[pi].first != name) throw_dim("adamw: optimizer state order does not match parameters");
        tensor<T> & m = state.m[pi].second;
        tensor<T> & v = state.v[pi].second;
        auto git = grads.find(name);
        const tensor<T> * g = git == grads.end() ? nullptr : &git->second;
        if (g && !g->same_shape(p)) throw_dim("adamw: gradient shape mismatch for " + name);

        for (int64_t i = 0; i < p.numel(); i++) {
            const double gi = g ? (double) g->at(i) : 0.0;
            const double mi = cfg.beta1 * (double) m.at(i) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * (double) v.at(i) + (1.0 - cfg.beta2) * gi * gi;
            m.at(i) = (T) mi;
            v.at(i) = (T) vi;
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double update = mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * (double) p.at(i);
            p.at(i) = (T) ((double) p.at(i) - lr * update);
        }
    }
    state.step = t;
}

} // namespace ptlab
