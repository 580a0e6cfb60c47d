#include "ptlab.h"

#include "checkpoint.hpp"
#include "data.hpp"
#include "merge.hpp"
#include "model.hpp"
#include "specmon.hpp"
#include "train.hpp"
#include "upscale.hpp"

#include <fstream>
#include <string>
#include <vector>

// exceptions never cross the C boundary: every entry point funnels through
// guarded(), which converts them to status codes and a thread-local message

namespace {

thread_local std::string g_last_error;

int status_of(ptlab::errc kind) {
    switch (kind) {
        case ptlab::errc::config:     return PTLAB_ERR_CONFIG;
        case ptlab::errc::data:       return PTLAB_ERR_DATA;
        case ptlab::errc::checkpoint: return PTLAB_ERR_CHECKPOINT;
        default:                      return PTLAB_ERR_INTERNAL;
    }
}

template <typename Fn>
int guarded(Fn && fn) {
    try {
        fn();
        return PTLAB_OK;
    } catch (const ptlab::error & e) {
        g_last_error = e.what();
        return status_of(e.kind);
    } catch (const std::exception & e) {
        g_last_error = e.what();
        return PTLAB_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return PTLAB_ERR_INTERNAL;
    }
}

void require(bool ok, const char * what) {
    if (!ok) throw ptlab::error(ptlab::errc::argument, what);
}

} // namespace

struct ptlab_model {
    ptlab::param_set<float> params;
    int64_t step = 0;
    uint64_t seed = 0;
};

struct ptlab_report {
    std::vector<ptlab::layer_report> records;
    std::vector<std::string> json;
};

extern "C" {

const char * ptlab_version(void) { return "0.1.0"; }

const char * ptlab_last_error(void) { return g_last_error.c_str(); }

int ptlab_model_init(const char * config_json_path, uint64_t seed, ptlab_model ** out) {
    return guarded([&] {
        require(config_json_path && out, "ptlab_model_init: NULL argument");
        const ptlab::model_config cfg = ptlab::model_config_from_json_file(config_json_path);
        auto * m = new ptlab_model();
        m->params = ptlab::init_params(cfg, seed);
        m->seed = seed;
        *out = m;
    });
}

int ptlab_model_load(const char * checkpoint_dir, ptlab_model ** out) {
    return guarded([&] {
        require(checkpoint_dir && out, "ptlab_model_load: NULL argument");
        ptlab::loaded_checkpoint ck = ptlab::load_checkpoint(checkpoint_dir);
        auto * m = new ptlab_model();
        m->params = std::move(ck.params);
        m->step = ck.step;
        m->seed = ck.rng_seed;
        *out = m;
    });
}

int ptlab_model_save(ptlab_model * m, const char * checkpoint_dir) {
    return guarded([&] {
        require(m && checkpoint_dir, "ptlab_model_save: NULL argument");
        ptlab::save_checkpoint(checkpoint_dir, m->params, nullptr, m->step, m->seed);
    });
}

void ptlab_model_free(ptlab_model * m) { delete m; }

int64_t ptlab_model_n_layers(const ptlab_model * m) { return m ? m->params.config.n_layers : -1; }

int64_t ptlab_model_n_params(const ptlab_model * m) { return m ? m->params.n_params() : -1; }

int64_t ptlab_model_step(const ptlab_model * m) { return m ? m->step : -1; }

int ptlab_model_upscale(ptlab_model * m, int32_t overlap) {
    return guarded([&] {
        require(m != nullptr, "ptlab_model_upscale: NULL model");
        m->params = ptlab::depth_upscale(m->params, overlap);
    });
}

int ptlab_upscale_mapping(int32_t n_layers, int32_t overlap, int32_t * out, int32_t out_cap,
                          int32_t * out_len) {
    return guarded([&] {
        require(out && out_len, "ptlab_upscale_mapping: NULL output");
        const std::vector<int32_t> mapping = ptlab::upscale_mapping(n_layers, overlap);
        require((int32_t) mapping.size() <= out_cap, "ptlab_upscale_mapping: output buffer too small");
        for (size_t i = 0; i < mapping.size(); i++) out[i] = mapping[i];
        *out_len = (int32_t) mapping.size();
    });
}

int ptlab_merge(const char * recipe_json_path, const char * out_dir, ptlab_warning_cb warn, void * user) {
    return guarded([&] {
        require(recipe_json_path && out_dir, "ptlab_merge: NULL argument");
        const ptlab::merge_recipe recipe = ptlab::load_merge_recipe(recipe_json_path);
        const std::vector<std::string> warnings = ptlab::run_merge_recipe(recipe, out_dir);
        if (warn) {
            for (const std::string & w : warnings) warn(w.c_str(), user);
        }
    });
}

int ptlab_spectral_analyze(const char * checkpoint_dir, ptlab_report ** out) {
    return guarded([&] {
        require(checkpoint_dir && out, "ptlab_spectral_analyze: NULL argument");
        ptlab::loaded_checkpoint ck = ptlab::load_checkpoint(checkpoint_dir);
        auto * rep = new ptlab_report();
        rep->records = ptlab::spectral_report(ck.params);
        rep->json.reserve(rep->records.size());
        for (const auto & r : rep->records) rep->json.push_back(ptlab::layer_report_json(r));
        *out = rep;
    });
}

int64_t ptlab_report_count(const ptlab_report * r) { return r ? (int64_t) r->records.size() : -1; }

const char * ptlab_report_record_json(const ptlab_report * r, int64_t i) {
    if (!r || i < 0 || i >= (int64_t) r->json.size()) return nullptr;
    return r->json[(size_t) i].c_str();
}

int64_t ptlab_report_unhealthy(const ptlab_report * r) {
    if (!r) return -1;
    int64_t n = 0;
    for (const auto & rec : r->records) {
        if (rec.status == ptlab::layer_report::fit_status::ok && !rec.healthy) n++;
    }
    return n;
}

void ptlab_report_free(ptlab_report * r) { delete r; }

int ptlab_data_filter_prefs(const char * in_path, const char * out_path, ptlab_data_counts * counts) {
    return guarded([&] {
        require(in_path && out_path, "ptlab_data_filter_prefs: NULL argument");
        const auto records = ptlab::load_preferences(in_path);
        ptlab::pref_filter_stats stats;
        const auto kept = ptlab::filter_preferences(records, stats);
        ptlab::write_preferences(out_path, kept);
        if (counts) {
            counts->read = stats.read;
            counts->kept = stats.kept;
            counts->dropped = stats.dropped;
            counts->swapped = stats.swapped;
        }
    });
}

int ptlab_data_dedup(const char * in_path, const char * out_path, const char * report_path, double threshold,
                     uint64_t seed, ptlab_data_counts * counts) {
    return guarded([&] {
        require(in_path && out_path, "ptlab_data_dedup: NULL argument");
        const ptlab::document_file docs = ptlab::load_documents(in_path);
        ptlab::dedup_config cfg;
        cfg.threshold = threshold;
        cfg.seed = seed;
        const auto entries = ptlab::dedup_documents(docs.texts, cfg);

        std::ofstream out(out_path);
        if (!out) ptlab::throw_data(std::string("cannot write ") + out_path);
        int64_t kept = 0;
        for (size_t i = 0; i < entries.size(); i++) {
            if (!entries[i].kept) continue;
            out << docs.lines[i] << "\n";
            kept++;
        }
        if (!out) ptlab::throw_data(std::string("write failed for ") + out_path);

        if (report_path && report_path[0]) {
            std::ofstream rep(report_path);
            if (!rep) ptlab::throw_data(std::string("cannot write ") + report_path);
            for (size_t i = 0; i < entries.size(); i++) {
                rep << "{\"index\":" << i << ",\"kept\":" << (entries[i].kept ? "true" : "false");
                if (!entries[i].kept) {
                    rep << ",\"duplicate_of\":" << entries[i].duplicate_of
                        << ",\"jaccard\":" << entries[i].jaccard;
                }
                rep << "}\n";
            }
            if (!rep) ptlab::throw_data(std::string("write failed for ") + report_path);
        }
        if (counts) {
            counts->read = (int64_t) entries.size();
            counts->kept = kept;
            counts->dropped = (int64_t) entries.size() - kept;
            counts->swapped = 0;
        }
    });
}

int ptlab_train(const char * run_config_json_path, const ptlab_train_options * opts, int64_t * out_final_step,
                double * out_final_loss) {
    return guarded([&] {
        require(run_config_json_path != nullptr, "ptlab_train: NULL config path");
        const ptlab::run_config cfg = ptlab::run_config_from_file(run_config_json_path);
        ptlab::train_options to;
        if (opts) {
            if (opts->resume_dir) to.resume_dir = opts->resume_dir;
            if (opts->out_dir) to.out_dir = opts->out_dir;
            to.max_steps = opts->max_steps;
            to.has_seed_override = opts->has_seed_override != 0;
            to.seed_override = opts->seed_override;
            if (opts->metrics) {
                auto cb = opts->metrics;
                auto user = opts->metrics_user;
                to.metrics = [cb, user](const std::string & line) { cb(line.c_str(), user); };
            }
        }
        const ptlab::train_result res = ptlab::train_run(cfg, to);
        if (out_final_step) *out_final_step = res.final_step;
        if (out_final_loss) *out_final_loss = res.final_loss;
    });
}

int ptlab_eval_perplexity(const char * checkpoint_dir, const char * data_jsonl_path, double * out_ppl,
                          int64_t * out_tokens) {
    return guarded([&] {
        require(checkpoint_dir && data_jsonl_path && out_ppl, "ptlab_eval_perplexity: NULL argument");
        ptlab::loaded_checkpoint ck = ptlab::load_checkpoint(checkpoint_dir);
        const auto records = ptlab::load_instructions(data_jsonl_path);
        int64_t tokens = 0;
        *out_ppl = ptlab::eval_perplexity(ck.params, records, &tokens);
        if (out_tokens) *out_tokens = tokens;
    });
}

} // extern "C"
