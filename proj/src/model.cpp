#include "model.hpp"
#include "data.hpp"

namespace ptlab {

void model_config::validate(bool chat_capable) const {
    if (n_layers < 1) throw_config("model: n_layers must be at least 1");
    if (dim < 1 || n_heads < 1 || n_kv_heads < 1 || head_size < 1 || intermediate < 1) {
        throw_config("model: all dimensions must be positive");
    }
    if (dim != n_heads * head_size) {
        throw_config("model: dim " + std::to_string(dim) + " != n_heads * head_size = " +
                     std::to_string(n_heads * head_size));
    }
    if (n_heads % n_kv_heads != 0) {
        throw_config("model: n_heads " + std::to_string(n_heads) + " not divisible by n_kv_heads " +
                     std::to_string(n_kv_heads));
    }
    if (head_size % 2 != 0) throw_config("model: head_size must be even for rotary embedding");
    if (vocab < 1) throw_config("model: vocab must be positive");
    if (max_ctx < 1) throw_config("model: max_ctx must be positive");
    if (!(rope_theta > 0.0)) throw_config("model: rope_theta must be positive");
    if (chat_capable && vocab < tokenizer::vocab_size) {
        throw_config("model: vocab " + std::to_string(vocab) + " too small for byte tokenizer (needs >= " +
                     std::to_string(tokenizer::vocab_size) + ")");
    }
}

std::vector<std::pair<std::string, shape_t>> tensor_schema(const model_config & cfg) {
    const int64_t dim = cfg.dim;
    const int64_t kv_dim = (int64_t) cfg.n_kv_heads * cfg.head_size;
    std::vector<std::pair<std::string, shape_t>> out;
    out.emplace_back("tok_embd.weight", shape_t{cfg.vocab, dim});
    for (int32_t l = 0; l < cfg.n_layers; l++) {
        const std::string blk = "blk." + std::to_string(l) + ".";
        out.emplace_back(blk + "attn_norm.weight", shape_t{dim});
        out.emplace_back(blk + "attn_q.weight", shape_t{dim, dim});
        out.emplace_back(blk + "attn_k.weight", shape_t{dim, kv_dim});
        out.emplace_back(blk + "attn_v.weight", shape_t{dim, kv_dim});
        out.emplace_back(blk + "attn_output.weight", shape_t{dim, dim});
        out.emplace_back(blk + "ffn_norm.weight", shape_t{dim});
        out.emplace_back(blk + "ffn_gate.weight", shape_t{dim, cfg.intermediate});
        out.emplace_back(blk + "ffn_up.weight", shape_t{dim, cfg.intermediate});
        out.emplace_back(blk + "ffn_down.weight", shape_t{cfg.intermediate, dim});
    }
    out.emplace_back("output_norm.weight", shape_t{dim});
    out.emplace_back("output.weight", shape_t{dim, cfg.vocab});
    return out;
}

int64_t param_count(const model_config & cfg) {
    const int64_t dim = cfg.dim;
    const int64_t kv_dim = (int64_t) cfg.n_kv_heads * cfg.head_size;
    const int64_t per_layer = 2 * dim                  // norms
                            + 2 * dim * dim            // q, output
                            + 2 * dim * kv_dim         // k, v
                            + 3 * dim * (int64_t) cfg.intermediate;
    return 2 * (int64_t) cfg.vocab * dim + (int64_t) cfg.n_layers * per_layer + dim;
}

param_set<float> init_params(const model_config & cfg, uint64_t seed) {
    cfg.validate();
    param_set<float> p;
    p.config = cfg;
    for (auto & [name, shape] : tensor_schema(cfg)) {
        tensor<float> t(shape);
        if (shape.size() == 1) {
            for (float & v : t.data) v = 1.0f;
        } else {
            counter_rng rng(seed, stream_id(name));
            for (float & v : t.data) v = (float) (0.02 * rng.next_normal());
        }
        p.tensors.emplace_back(name, std::move(t));
    }
    return p;
}

std::vector<int> positions_from_segments(const std::vector<int32_t> & segments) {
    std::vector<int> pos(segments.size());
    int run = 0;
    for (size_t i = 0; i < segments.size(); i++) {
        if (i > 0 && segments[i] == segments[i - 1]) {
            run++;
        } else if (i > 0 && segments[i] < segments[i - 1]) {
            throw error(errc::argument, "segments must be non-decreasing");
        } else {
            run = 0;
        }
        pos[i] = run;
    }
    return pos;
}

} // namespace ptlab
