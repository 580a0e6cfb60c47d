#include <ptlab.h>

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

// thin shell over the C API: parse flags, call, map status to exit code

namespace {

int fail(int status) {
    std::fprintf(stderr, "error: %s\n", ptlab_last_error());
    return status;
}

void print_metrics(const char * line, void *) {
    std::printf("%s\n", line);
    std::fflush(stdout);
}

void print_warning(const char * msg, void *) { std::fprintf(stderr, "warning: %s\n", msg); }

struct cli_state {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_train(const cli_state & g, const std::string & resume, int64_t steps) {
    if (g.config.empty()) {
        std::fprintf(stderr, "error: train needs --config\n");
        return PTLAB_ERR_CONFIG;
    }
    ptlab_train_options opts = {};
    opts.resume_dir = resume.empty() ? nullptr : resume.c_str();
    opts.out_dir = g.out.empty() ? nullptr : g.out.c_str();
    opts.max_steps = steps;
    opts.has_seed_override = g.seed_set ? 1 : 0;
    opts.seed_override = g.seed;
    opts.metrics = print_metrics;

    int64_t final_step = 0;
    double final_loss = 0.0;
    const int rc = ptlab_train(g.config.c_str(), &opts, &final_step, &final_loss);
    if (rc != PTLAB_OK) return fail(rc);
    std::fprintf(stderr, "done: step %" PRId64 ", loss %.6f\n", final_step, final_loss);
    return 0;
}

int cmd_upscale(const cli_state & g, const std::string & in, int32_t layers, int32_t overlap) {
    if (in.empty()) {
        // no checkpoint: just print the layer mapping
        std::vector<int32_t> mapping((size_t) (layers > 0 ? 2 * layers : 2), 0);
        int32_t len = 0;
        const int rc = ptlab_upscale_mapping(layers, overlap, mapping.data(), (int32_t) mapping.size(), &len);
        if (rc != PTLAB_OK) return fail(rc);
        std::printf("[");
        for (int32_t i = 0; i < len; i++) std::printf("%s%d", i ? "," : "", mapping[i]);
        std::printf("]\n");
        return 0;
    }
    if (g.out.empty()) {
        std::fprintf(stderr, "error: upscale needs --out\n");
        return PTLAB_ERR_CONFIG;
    }
    ptlab_model * m = nullptr;
    int rc = ptlab_model_load(in.c_str(), &m);
    if (rc != PTLAB_OK) return fail(rc);
    const int64_t before = ptlab_model_n_layers(m);
    rc = ptlab_model_upscale(m, overlap);
    if (rc == PTLAB_OK) rc = ptlab_model_save(m, g.out.c_str());
    if (rc != PTLAB_OK) {
        ptlab_model_free(m);
        return fail(rc);
    }
    std::fprintf(stderr, "upscaled %" PRId64 " -> %" PRId64 " layers, %" PRId64 " params\n", before,
                 ptlab_model_n_layers(m), ptlab_model_n_params(m));
    ptlab_model_free(m);
    return 0;
}

int cmd_merge(const cli_state & g, const std::string & recipe) {
    if (recipe.empty() || g.out.empty()) {
        std::fprintf(stderr, "error: merge needs --recipe and --out\n");
        return PTLAB_ERR_CONFIG;
    }
    const int rc = ptlab_merge(recipe.c_str(), g.out.c_str(), print_warning, nullptr);
    if (rc != PTLAB_OK) return fail(rc);
    std::fprintf(stderr, "merged -> %s\n", g.out.c_str());
    return 0;
}

int cmd_watch(const std::string & in) {
    ptlab_report * rep = nullptr;
    const int rc = ptlab_spectral_analyze(in.c_str(), &rep);
    if (rc != PTLAB_OK) return fail(rc);
    const int64_t n = ptlab_report_count(rep);
    for (int64_t i = 0; i < n; i++) std::printf("%s\n", ptlab_report_record_json(rep, i));
    const int64_t unhealthy = ptlab_report_unhealthy(rep);
    std::fprintf(stderr, "%" PRId64 " matrices analyzed, %" PRId64 " outside the healthy band\n", n, unhealthy);
    ptlab_report_free(rep);
    return 0;
}

int cmd_filter_prefs(const std::string & in, const std::string & out) {
    ptlab_data_counts counts = {};
    const int rc = ptlab_data_filter_prefs(in.c_str(), out.c_str(), &counts);
    if (rc != PTLAB_OK) return fail(rc);
    std::fprintf(stderr, "read %" PRId64 ", kept %" PRId64 " (%" PRId64 " swapped), dropped %" PRId64 "\n",
                 counts.read, counts.kept, counts.swapped, counts.dropped);
    return 0;
}

int cmd_dedup(const cli_state & g, const std::string & in, const std::string & out, const std::string & report,
              double threshold) {
    ptlab_data_counts counts = {};
    const int rc = ptlab_data_dedup(in.c_str(), out.c_str(), report.empty() ? nullptr : report.c_str(),
                                    threshold, g.seed, &counts);
    if (rc != PTLAB_OK) return fail(rc);
    std::fprintf(stderr, "read %" PRId64 ", kept %" PRId64 ", dropped %" PRId64 "\n", counts.read, counts.kept,
                 counts.dropped);
    return 0;
}

int cmd_eval(const std::string & ckpt, const std::string & data) {
    double ppl = 0.0;
    int64_t tokens = 0;
    const int rc = ptlab_eval_perplexity(ckpt.c_str(), data.c_str(), &ppl, &tokens);
    if (rc != PTLAB_OK) return fail(rc);
    std::printf("{\"perplexity\":%.8g,\"tokens\":%" PRId64 "}\n", ppl, tokens);
    return 0;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"desk-scale LLM post-training laboratory"};
    app.require_subcommand(1);
    app.fallthrough();

    cli_state g;
    app.add_option("--config", g.config, "run config JSON");
    auto * seed_opt = app.add_option("--seed", g.seed, "RNG seed override");
    app.add_option("--out", g.out, "output directory");

    auto * train = app.add_subcommand("train", "run a training schedule");
    std::string resume;
    int64_t steps = 0;
    train->add_option("--resume", resume, "checkpoint directory to resume from");
    train->add_option("--steps", steps, "stop after this many steps");

    auto * model = app.add_subcommand("model", "model surgery");
    model->require_subcommand(1);
    auto * upscale = model->add_subcommand("upscale", "duplicate the middle of the layer stack");
    std::string up_in;
    int32_t up_layers = 0, up_overlap = 0;
    upscale->add_option("--in", up_in, "source checkpoint directory");
    upscale->add_option("--layers", up_layers, "source layer count (mapping only, no checkpoint)");
    upscale->add_option("--overlap", up_overlap, "layers shared between the two copies")->required();

    auto * merge = model->add_subcommand("merge", "merge checkpoints per a recipe");
    std::string recipe;
    merge->add_option("--recipe", recipe, "merge recipe JSON")->required();

    auto * watch = app.add_subcommand("watch", "spectral health of a checkpoint");
    std::string watch_in;
    watch->add_option("--in", watch_in, "checkpoint directory")->required();

    auto * data = app.add_subcommand("data", "dataset utilities");
    data->require_subcommand(1);
    auto * prefs = data->add_subcommand("filter-prefs", "score-filter preference pairs");
    std::string p_in, p_out;
    prefs->add_option("--in", p_in, "input JSONL")->required();
    prefs->add_option("--out", p_out, "output JSONL")->required();

    auto * dedup = data->add_subcommand("dedup", "drop near-duplicate documents");
    std::string d_in, d_out, d_report;
    double d_threshold = 0.8;
    dedup->add_option("--in", d_in, "input JSONL")->required();
    dedup->add_option("--out", d_out, "kept documents JSONL")->required();
    dedup->add_option("--report", d_report, "per-document report JSONL");
    dedup->add_option("--threshold", d_threshold, "Jaccard similarity threshold (default 0.8)");

    auto * eval = app.add_subcommand("eval", "perplexity of a checkpoint on instruction data");
    std::string e_ckpt, e_data;
    eval->add_option("--ckpt", e_ckpt, "checkpoint directory")->required();
    eval->add_option("--data", e_data, "instruction JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::fprintf(stderr, "error: %s\n", e.what());
        return PTLAB_ERR_CONFIG;
    }
    g.seed_set = seed_opt->count() > 0;

    if (train->parsed()) return cmd_train(g, resume, steps);
    if (model->parsed()) {
        if (upscale->parsed()) return cmd_upscale(g, up_in, up_layers, up_overlap);
        if (merge->parsed()) return cmd_merge(g, recipe);
    }
    if (watch->parsed()) return cmd_watch(watch_in);
    if (data->parsed()) {
        if (prefs->parsed()) return cmd_filter_prefs(p_in, p_out);
        if (dedup->parsed()) return cmd_dedup(g, d_in, d_out, d_report, d_threshold);
    }
    if (eval->parsed()) return cmd_eval(e_ckpt, e_data);
    std::fprintf(stderr, "error: no command\n");
    return PTLAB_ERR_CONFIG;
}
