#pragma once

#include "autodiff.hpp"
#include "gradcheck.hpp"
#include "rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ptlab {

inline constexpr double NORM_EPS = 1e-5;

struct model_config {
    int32_t n_layers     = 0;
    int32_t dim          = 0;
    int32_t n_heads      = 0;
    int32_t n_kv_heads   = 0;
    int32_t head_size    = 0;
    int32_t intermediate = 0;
    int32_t vocab        = 0;
    double  rope_theta   = 0.0;
    int32_t max_ctx      = 0;

    // chat_capable additionally demands room for the byte alphabet plus the
    // control tokens, which real training data always produces
    void validate(bool chat_capable = false) const;

    bool operator==(const model_config &) const = default;
};

// every tensor of one model, in a fixed canonical order
template <typename T>
struct param_set {
    model_config config;
    named_tensors<T> tensors;

    tensor<T> & find(const std::string & name) {
        for (auto & [n, t] : tensors) {
            if (n == name) return t;
        }
        throw error(errc::argument, "no tensor named " + name);
    }

    const tensor<T> & find(const std::string & name) const {
        return const_cast<param_set *>(this)->find(name);
    }

    bool has(const std::string & name) const {
        for (auto & [n, t] : tensors) {
            if (n == name) return true;
        }
        return false;
    }

    int64_t n_params() const {
        int64_t n = 0;
        for (auto & [name, t] : tensors) n += t.numel();
        return n;
    }

    template <typename U>
    param_set<U> cast() const {
        param_set<U> out;
        out.config = config;
        out.tensors.reserve(tensors.size());
        for (auto & [name, t] : tensors) out.tensors.emplace_back(name, t.template cast<U>());
        return out;
    }
};

std::vector<std::pair<std::string, shape_t>> tensor_schema(const model_config & cfg);
int64_t param_count(const model_config & cfg);

// fresh weights: gains one, projections and embeddings N(0, 0.02^2),
// each tensor drawn from its own name-keyed stream
param_set<float> init_params(const model_config & cfg, uint64_t seed);

// ---- forward graph ----

template <typename T>
std::map<std::string, typename tape<T>::vid> register_params(tape<T> & t, const param_set<T> & p) {
    std::map<std::string, typename tape<T>::vid> ids;
    for (auto & [name, w] : p.tensors) ids.emplace(name, t.param(name, w));
    return ids;
}

// position of each token within its segment (0-based, restarting per segment)
std::vector<int> positions_from_segments(const std::vector<int32_t> & segments);

template <typename T>
typename tape<T>::vid swiglu_mlp(tape<T> & t, typename tape<T>::vid x,
                                 typename tape<T>::vid gate_w, typename tape<T>::vid up_w,
                                 typename tape<T>::vid down_w) {
    auto gate = t.silu(t.matmul(x, gate_w));
    auto up = t.matmul(x, up_w);
    return t.matmul(t.mul(gate, up), down_w);
}

template <typename T>
struct forward_out {
    typename tape<T>::vid logits;
    typename tape<T>::vid logprobs;
};

// decoder stack over one packed sequence; segments empty means one segment
template <typename T>
forward_out<T> build_forward(tape<T> & t, const std::map<std::string, typename tape<T>::vid> & ids,
                             const model_config & cfg, const std::vector<int32_t> & tokens,
                             std::vector<int32_t> segments = {}) {
    if (tokens.empty()) throw error(errc::argument, "forward: empty token sequence");
    if ((int64_t) tokens.size() > cfg.max_ctx) {
        throw error(errc::argument, "forward: sequence length " + std::to_string(tokens.size()) +
                    " exceeds max context " + std::to_string(cfg.max_ctx));
    }
    if (segments.empty()) segments.assign(tokens.size(), 0);
    if (segments.size() != tokens.size()) {
        throw_dim("forward: segments length does not match tokens length");
    }
    const std::vector<int> positions = positions_from_segments(segments);

    auto pid = [&](const std::string & name) {
        auto it = ids.find(name);
        if (it == ids.end()) throw error(errc::argument, "forward: missing parameter " + name);
        return it->second;
    };

    auto x = t.embed(pid("tok_embd.weight"), tokens);
    for (int32_t l = 0; l < cfg.n_layers; l++) {
        const std::string blk = "blk." + std::to_string(l) + ".";
        auto h = t.rmsnorm(x, pid(blk + "attn_norm.weight"), (T) NORM_EPS);
        auto q = t.rope(t.matmul(h, pid(blk + "attn_q.weight")), positions, (T) cfg.rope_theta, cfg.head_size);
        auto k = t.rope(t.matmul(h, pid(blk + "attn_k.weight")), positions, (T) cfg.rope_theta, cfg.head_size);
        auto v = t.matmul(h, pid(blk + "attn_v.weight"));
        auto att = t.attention_gqa(q, k, v, segments, cfg.n_heads, cfg.n_kv_heads, cfg.head_size);
        x = t.add(x, t.matmul(att, pid(blk + "attn_output.weight")));
        auto h2 = t.rmsnorm(x, pid(blk + "ffn_norm.weight"), (T) NORM_EPS);
        x = t.add(x, swiglu_mlp(t, h2, pid(blk + "ffn_gate.weight"), pid(blk + "ffn_up.weight"),
                                pid(blk + "ffn_down.weight")));
    }
    x = t.rmsnorm(x, pid("output_norm.weight"), (T) NORM_EPS);
    auto logits = t.matmul(x, pid("output.weight"));
    return {logits, t.log_softmax_rows(logits)};
}

} // namespace ptlab
