#include "merge.hpp"
#include "checkpoint.hpp"
#include "jsonio.hpp"

namespace ptlab {

using json = nlohmann::json;

merge_recipe load_merge_recipe(const std::string & path) {
    const json j = load_json_file(path, errc::config);
    merge_recipe r;
    r.method = json_str(j, "method", path);
    if (r.method != "linear" && r.method != "ties" && r.method != "model_stock") {
        throw_config(path + ": unknown merge method '" + r.method + "'");
    }
    if (!j.contains("models") || !j["models"].is_array() || j["models"].empty()) {
        throw_config(path + ": 'models' must be a non-empty array of checkpoint directories");
    }
    for (const json & m : j["models"]) {
        if (!m.is_string()) throw_config(path + ": 'models' entries must be strings");
        r.models.push_back(m.get<std::string>());
    }
    r.anchor = json_str_or(j, "anchor", "", path);
    if (j.contains("weights")) {
        if (!j["weights"].is_array()) throw_config(path + ": 'weights' must be an array");
        for (const json & w : j["weights"]) {
            if (!w.is_number()) throw_config(path + ": 'weights' entries must be numbers");
            r.weights.push_back(w.get<double>());
        }
    }
    r.density = json_num_or(j, "density", 1.0, path);

    if (r.method == "linear" && !r.weights.empty() && r.weights.size() != r.models.size()) {
        throw_config(path + ": weights count does not match models count");
    }
    if ((r.method == "ties" || r.method == "model_stock") && r.anchor.empty()) {
        throw_config(path + ": method '" + r.method + "' needs an 'anchor' checkpoint");
    }
    return r;
}

std::vector<std::string> run_merge_recipe(const merge_recipe & recipe, const std::string & out_dir) {
    if (out_dir.empty()) throw_config("merge: no output directory given");

    std::vector<loaded_checkpoint> loaded;
    loaded.reserve(recipe.models.size());
    for (const std::string & dir : recipe.models) loaded.push_back(load_checkpoint(dir));
    std::vector<const param_set<float> *> models;
    models.reserve(loaded.size());
    for (const loaded_checkpoint & c : loaded) models.push_back(&c.params);

    std::vector<std::string> warnings;
    param_set<float> merged;
    if (recipe.method == "linear") {
        std::vector<double> weights = recipe.weights;
        if (weights.empty()) weights.assign(models.size(), 1.0);
        merged = merge_linear(models, std::move(weights));
    } else {
        const loaded_checkpoint anchor = load_checkpoint(recipe.anchor);
        if (recipe.method == "ties") {
            merged = merge_ties(models, anchor.params, recipe.density);
        } else {
            stock_result<float> res = merge_model_stock(models, anchor.params);
            merged = std::move(res.merged);
            warnings = std::move(res.warnings);
        }
    }

    save_checkpoint(out_dir, merged, nullptr, 0, loaded.front().rng_seed);
    return warnings;
}

} // namespace ptlab
