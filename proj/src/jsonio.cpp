#include "jsonio.hpp"

#include <fstream>

namespace ptlab {

using json = nlohmann::json;

json load_json_file(const std::string & path, errc kind) {
    std::ifstream f(path);
    if (!f) throw error(kind, "cannot open " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw error(kind, path + ": malformed JSON");
    if (!j.is_object()) throw error(kind, path + ": expected a JSON object");
    return j;
}

namespace {

const json & field(const json & j, const std::string & key, const std::string & ctx) {
    auto it = j.find(key);
    if (it == j.end()) throw_config(ctx + ": missing '" + key + "'");
    return *it;
}

} // namespace

double json_num(const json & j, const std::string & key, const std::string & ctx) {
    const json & v = field(j, key, ctx);
    if (!v.is_number()) throw_config(ctx + ": '" + key + "' must be a number");
    return v.get<double>();
}

double json_num_or(const json & j, const std::string & key, double fallback, const std::string & ctx) {
    if (!j.contains(key)) return fallback;
    return json_num(j, key, ctx);
}

int64_t json_int(const json & j, const std::string & key, const std::string & ctx) {
    const json & v = field(j, key, ctx);
    if (!v.is_number_integer()) throw_config(ctx + ": '" + key + "' must be an integer");
    return v.get<int64_t>();
}

int64_t json_int_or(const json & j, const std::string & key, int64_t fallback, const std::string & ctx) {
    if (!j.contains(key)) return fallback;
    return json_int(j, key, ctx);
}

std::string json_str(const json & j, const std::string & key, const std::string & ctx) {
    const json & v = field(j, key, ctx);
    if (!v.is_string()) throw_config(ctx + ": '" + key + "' must be a string");
    return v.get<std::string>();
}

std::string json_str_or(const json & j, const std::string & key, const std::string & fallback,
                        const std::string & ctx) {
    if (!j.contains(key)) return fallback;
    return json_str(j, key, ctx);
}

bool json_bool_or(const json & j, const std::string & key, bool fallback, const std::string & ctx) {
    if (!j.contains(key)) return fallback;
    const json & v = j.at(key);
    if (!v.is_boolean()) throw_config(ctx + ": '" + key + "' must be a boolean");
    return v.get<bool>();
}

model_config model_config_from_json(const json & j, const std::string & ctx) {
    model_config cfg;
    cfg.n_layers     = (int32_t) json_int(j, "n_layers", ctx);
    cfg.dim          = (int32_t) json_int(j, "dim", ctx);
    cfg.n_heads      = (int32_t) json_int(j, "n_heads", ctx);
    cfg.n_kv_heads   = (int32_t) json_int(j, "n_kv_heads", ctx);
    cfg.head_size    = (int32_t) json_int(j, "head_size", ctx);
    cfg.intermediate = (int32_t) json_int(j, "intermediate", ctx);
    cfg.vocab        = (int32_t) json_int(j, "vocab", ctx);
    cfg.rope_theta   = json_num(j, "rope_theta", ctx);
    cfg.max_ctx      = (int32_t) json_int(j, "max_ctx", ctx);
    cfg.validate();
    return cfg;
}

json model_config_to_json_obj(const model_config & cfg) {
    return json{
        {"n_layers", cfg.n_layers},         {"dim", cfg.dim},
        {"n_heads", cfg.n_heads},           {"n_kv_heads", cfg.n_kv_heads},
        {"head_size", cfg.head_size},       {"intermediate", cfg.intermediate},
        {"vocab", cfg.vocab},               {"rope_theta", cfg.rope_theta},
        {"max_ctx", cfg.max_ctx},
    };
}

opt_config opt_config_from_json(const json & j, const std::string & ctx) {
    opt_config cfg;
    cfg.beta1        = json_num_or(j, "beta1", cfg.beta1, ctx);
    cfg.beta2        = json_num_or(j, "beta2", cfg.beta2, ctx);
    cfg.eps          = json_num_or(j, "eps", cfg.eps, ctx);
    cfg.weight_decay = json_num_or(j, "weight_decay", cfg.weight_decay, ctx);
    cfg.clip_norm    = json_num_or(j, "clip_norm", cfg.clip_norm, ctx);
    cfg.peak_lr      = json_num(j, "peak_lr", ctx);
    cfg.min_lr       = json_num_or(j, "min_lr", cfg.peak_lr, ctx);
    cfg.warmup_iters = json_int_or(j, "warmup_iters", 0, ctx);
    cfg.total_iters  = json_int(j, "total_iters", ctx);
    cfg.alr_enabled  = json_bool_or(j, "adaptive_lr", false, ctx);
    cfg.baseline_batch_tokens = json_int_or(j, "baseline_batch_tokens", cfg.baseline_batch_tokens, ctx);
    cfg.validate();
    return cfg;
}

json opt_config_to_json_obj(const opt_config & cfg) {
    return json{
        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},
        {"eps", cfg.eps},
        {"weight_decay", cfg.weight_decay},
        {"clip_norm", cfg.clip_norm},
        {"peak_lr", cfg.peak_lr},
        {"min_lr", cfg.min_lr},
        {"warmup_iters", cfg.warmup_iters},
        {"total_iters", cfg.total_iters},
        {"adaptive_lr", cfg.alr_enabled},
        {"baseline_batch_tokens", cfg.baseline_batch_tokens},
    };
}

dpo_config dpo_config_from_json(const json & j, const std::string & ctx) {
    dpo_config cfg;
    cfg.beta   = json_num_or(j, "beta", cfg.beta, ctx);
    cfg.lambda = json_num_or(j, "lambda", cfg.lambda, ctx);
    cfg.validate();
    return cfg;
}

} // namespace ptlab
