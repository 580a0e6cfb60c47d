#pragma once

// JSON conversions shared by checkpoints, run configs, and the CLI.
// Kept out of the public headers so nlohmann stays an implementation detail.

#include "losses.hpp"
#include "model.hpp"
#include "optim.hpp"

#include <json.hpp>

#include <string>

namespace ptlab {

nlohmann::json load_json_file(const std::string & path, errc kind);

model_config model_config_from_json(const nlohmann::json & j, const std::string & ctx);
nlohmann::json model_config_to_json_obj(const model_config & cfg);

opt_config opt_config_from_json(const nlohmann::json & j, const std::string & ctx);
nlohmann::json opt_config_to_json_obj(const opt_config & cfg);

dpo_config dpo_config_from_json(const nlohmann::json & j, const std::string & ctx);

// field accessors that raise config errors naming the offending key
double json_num(const nlohmann::json & j, const std::string & key, const std::string & ctx);
double json_num_or(const nlohmann::json & j, const std::string & key, double fallback, const std::string & ctx);
int64_t json_int(const nlohmann::json & j, const std::string & key, const std::string & ctx);
int64_t json_int_or(const nlohmann::json & j, const std::string & key, int64_t fallback, const std::string & ctx);
std::string json_str(const nlohmann::json & j, const std::string & key, const std::string & ctx);
std::string json_str_or(const nlohmann::json & j, const std::string & key, const std::string & fallback,
                        const std::string & ctx);
bool json_bool_or(const nlohmann::json & j, const std::string & key, bool fallback, const std::string & ctx);

} // namespace ptlab
