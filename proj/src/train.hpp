#pragma once

#include "checkpoint.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "optim.hpp"

#include <functional>
#include <string>

namespace ptlab {

struct run_config {
    model_config model;
    opt_config optimizer;
    std::string loss_mode = "sft"; // "sft" (weighted instruction CE), "dpo", "dpop"
    dpo_config dpo;

    std::string train_data;
    std::string eval_data;

    int64_t batch_size = 8;  // sequences (sft) or pairs (dpo) per step
    uint64_t seed = 0;

    int64_t checkpoint_interval = 0; // 0: only the initial and final checkpoints
    std::string checkpoint_dir;
    int64_t eval_interval = 0;       // 0: never evaluated during training

    std::string init_checkpoint;      // optional warm start
    std::string reference_checkpoint; // required by dpo/dpop

    void validate() const;
};

run_config run_config_from_file(const std::string & path);

struct train_options {
    std::string resume_dir;   // resume from this checkpoint directory
    std::string out_dir;      // overrides checkpoint_dir
    int64_t max_steps = 0;    // stop after this many steps this invocation (0: run out the schedule)
    bool has_seed_override = false;
    uint64_t seed_override = 0;
    std::function<void(const std::string &)> metrics; // one JSON line per event
};

struct train_result {
    int64_t final_step = 0;
    double final_loss = 0.0;
    std::string final_checkpoint;
};

train_result train_run(const run_config & cfg, const train_options & opts);

// exp(mean masked negative log-likelihood) over the rendered records
double eval_perplexity(const param_set<float> & params, const std::vector<instruction_record> & records,
                       int64_t * out_tokens = nullptr);

} // namespace ptlab
