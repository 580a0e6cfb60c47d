#pragma once

#include "model.hpp"
#include "optim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ptlab {

inline constexpr int32_t CHECKPOINT_FORMAT_VERSION = 1;

struct tensor_entry {
    std::string name;
    shape_t shape;
    uint64_t offset = 0; // bytes into weights.bin
    uint64_t length = 0; // bytes
};

struct checkpoint_manifest {
    int32_t format_version = CHECKPOINT_FORMAT_VERSION;
    model_config config;
    int64_t step = 0;
    uint64_t rng_seed = 0;
    bool has_opt_state = false;
    std::vector<tensor_entry> tensors;
    uint64_t blob_bytes = 0;
};

struct loaded_checkpoint {
    param_set<float> params;
    std::optional<opt_state<float>> opt;
    int64_t step = 0;
    uint64_t rng_seed = 0;
    checkpoint_manifest manifest;
};

// a checkpoint is a directory: manifest.json plus weights.bin, the raw fp32
// little-endian tensor data followed by a 64-bit FNV-1a checksum of the blob
void save_checkpoint(const std::string & dir, const param_set<float> & params,
                     const opt_state<float> * opt, int64_t step, uint64_t rng_seed);

// fail-closed: any checksum, version, size, or schema mismatch refuses to load
loaded_checkpoint load_checkpoint(const std::string & dir);

uint64_t fnv1a64(const void * data, size_t len);

// model config <-> JSON, shared by checkpoints and run configs
model_config model_config_from_json_file(const std::string & path);
std::string model_config_to_json(const model_config & cfg);

} // namespace ptlab
