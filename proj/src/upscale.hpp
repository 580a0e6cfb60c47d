#pragma once

#include "model.hpp"

#include <string>
#include <vector>

namespace ptlab {

// source layer index for each output layer: [0 .. n-m-1] followed by [m .. n-1].
// Drops m layers from the tail of the first copy and m from the head of the
// second, so the result has 2n - 2m layers with a duplicated middle band.
std::vector<int32_t> upscale_mapping(int32_t n_layers, int32_t overlap);

template <typename T>
param_set<T> depth_upscale(const param_set<T> & src, int32_t overlap) {
    const auto mapping = upscale_mapping(src.config.n_layers, overlap);

    param_set<T> out;
    out.config = src.config;
    out.config.n_layers = (int32_t) mapping.size();
    out.tensors.reserve(src.tensors.size() + 9 * mapping.size());

    static const char * blk_suffixes[] = {
        "attn_norm.weight", "attn_q.weight", "attn_k.weight", "attn_v.weight", "attn_output.weight",
        "ffn_norm.weight", "ffn_gate.weight", "ffn_up.weight", "ffn_down.weight",
    };

    out.tensors.emplace_back("tok_embd.weight", src.find("tok_embd.weight"));
    for (size_t l = 0; l < mapping.size(); l++) {
        const std::string dst = "blk." + std::to_string(l) + ".";
        const std::string from = "blk." + std::to_string(mapping[l]) + ".";
        for (const char * sfx : blk_suffixes) out.tensors.emplace_back(dst + sfx, src.find(from + sfx));
    }
    out.tensors.emplace_back("output_norm.weight", src.find("output_norm.weight"));
    out.tensors.emplace_back("output.weight", src.find("output.weight"));
    return out;
}

} // namespace ptlab
