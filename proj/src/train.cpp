#include "train.hpp"
#include "jsonio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace ptlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

void run_config::validate() const {
    model.validate(true);
    optimizer.validate();
    if (loss_mode != "sft" && loss_mode != "dpo" && loss_mode != "dpop") {
        throw_config("run: loss_mode must be one of sft, dpo, dpop, got '" + loss_mode + "'");
    }
    dpo.validate();
    if (train_data.empty()) throw_config("run: missing train_data");
    if (batch_size < 1) throw_config("run: batch_size must be positive");
    if (checkpoint_interval < 0 || eval_interval < 0) throw_config("run: intervals must be non-negative");
    if (eval_interval > 0 && eval_data.empty()) throw_config("run: eval_interval set but no eval_data");
    if ((loss_mode == "dpo" || loss_mode == "dpop") && reference_checkpoint.empty()) {
        throw_config("run: " + loss_mode + " needs a reference_checkpoint");
    }
}

run_config run_config_from_file(const std::string & path) {
    const json j = load_json_file(path, errc::config);
    run_config cfg;
    if (!j.contains("model") || !j["model"].is_object()) throw_config(path + ": missing 'model'");
    cfg.model = model_config_from_json(j["model"], path + ":model");
    if (!j.contains("optimizer") || !j["optimizer"].is_object()) throw_config(path + ": missing 'optimizer'");
    cfg.optimizer = opt_config_from_json(j["optimizer"], path + ":optimizer");
    cfg.loss_mode = json_str_or(j, "loss_mode", "sft", path);
    if (j.contains("dpo")) {
        if (!j["dpo"].is_object()) throw_config(path + ": 'dpo' must be an object");
        cfg.dpo = dpo_config_from_json(j["dpo"], path + ":dpo");
    }
    cfg.train_data = json_str(j, "train_data", path);
    cfg.eval_data = json_str_or(j, "eval_data", "", path);
    cfg.batch_size = json_int_or(j, "batch_size", cfg.batch_size, path);
    cfg.seed = (uint64_t) json_int_or(j, "seed", 0, path);
    cfg.checkpoint_interval = json_int_or(j, "checkpoint_interval", 0, path);
    cfg.checkpoint_dir = json_str_or(j, "checkpoint_dir", "", path);
    cfg.eval_interval = json_int_or(j, "eval_interval", 0, path);
    cfg.init_checkpoint = json_str_or(j, "init_checkpoint", "", path);
    cfg.reference_checkpoint = json_str_or(j, "reference_checkpoint", "", path);
    cfg.validate();
    return cfg;
}

namespace {

// next-token targets for one rendered sequence, optionally restricted to the
// supervised span of the final message
struct scored_sequence {
    std::vector<int32_t> tokens;
    std::vector<int32_t> targets;
    std::vector<uint8_t> tmask;
    int64_t n_scored = 0;
};

scored_sequence score_render(const rendered_chat & rc, bool final_turn_only) {
    scored_sequence out;
    out.tokens = rc.tokens;
    const size_t len = rc.tokens.size();
    out.targets.assign(len, 0);
    out.tmask.assign(len, 0);
    const auto span = rc.last_span();
    for (size_t i = 0; i + 1 < len; i++) {
        out.targets[i] = rc.tokens[i + 1];
        bool m = rc.mask[i + 1] != 0;
        if (final_turn_only) m = m && i + 1 >= span.first && i + 1 < span.second;
        out.tmask[i] = m ? 1 : 0;
        if (m) out.n_scored++;
    }
    return out;
}

std::string metrics_line(std::initializer_list<std::pair<const char *, json>> fields) {
    json j;
    for (auto & [k, v] : fields) j[k] = v;
    return j.dump();
}

struct epoch_order {
    int64_t epoch = -1;
    std::vector<size_t> order;

    const std::vector<size_t> & get(int64_t want, int64_t n, uint64_t seed) {
        if (want != epoch) {
            order = shuffled_indices((size_t) n, seed, stream_id("train.epoch") + (uint64_t) want);
            epoch = want;
        }
        return order;
    }
};

struct step_state {
    param_set<float> params;
    opt_state<float> opt;
    int64_t start_step = 0;
    uint64_t seed = 0;
};

step_state prepare_state(const run_config & cfg, const train_options & opts) {
    step_state st;
    st.seed = opts.has_seed_override ? opts.seed_override : cfg.seed;
    if (!opts.resume_dir.empty()) {
        loaded_checkpoint ck = load_checkpoint(opts.resume_dir);
        if (!(ck.params.config == cfg.model)) {
            throw_config("resume: checkpoint model does not match run config");
        }
        st.params = std::move(ck.params);
        if (ck.opt) {
            st.opt = std::move(*ck.opt);
        } else {
            st.opt.init_like(st.params);
        }
        st.opt.step = ck.step;
        st.start_step = ck.step;
        st.seed = ck.rng_seed;
        return st;
    }
    std::string init = cfg.init_checkpoint;
    if (init.empty() && (cfg.loss_mode == "dpo" || cfg.loss_mode == "dpop")) {
        init = cfg.reference_checkpoint; // preference tuning starts from the reference policy
    }
    if (!init.empty()) {
        loaded_checkpoint ck = load_checkpoint(init);
        if (!(ck.params.config == cfg.model)) {
            throw_config("init_checkpoint model does not match run config");
        }
        st.params = std::move(ck.params);
    } else {
        st.params = init_params(cfg.model, st.seed);
    }
    st.opt.init_like(st.params);
    return st;
}

void emit(const train_options & opts, const std::string & line) {
    if (opts.metrics) opts.metrics(line);
}

std::string checkpoint_root(const run_config & cfg, const train_options & opts) {
    const std::string dir = !opts.out_dir.empty() ? opts.out_dir : cfg.checkpoint_dir;
    if (dir.empty()) throw_config("run: no checkpoint directory (set checkpoint_dir or --out)");
    return dir;
}

} // namespace

double eval_perplexity(const param_set<float> & params, const std::vector<instruction_record> & records,
                       int64_t * out_tokens) {
    if (records.empty()) throw_data("eval: no records");
    double total_nll = 0.0;
    int64_t total_tokens = 0;
    for (size_t r = 0; r < records.size(); r++) {
        const scored_sequence ss = score_render(render_chat(records[r].messages), false);
        if ((int64_t) ss.tokens.size() > params.config.max_ctx) {
            throw_data("eval: record " + std::to_string(r) + " longer than max context");
        }
        tape<float> t(false);
        auto ids = register_params(t, params);
        auto fwd = build_forward(t, ids, params.config, ss.tokens);
        const tensor<float> & lp = t.value(fwd.logprobs);
        for (size_t i = 0; i < ss.tmask.size(); i++) {
            if (!ss.tmask[i]) continue;
            total_nll -= (double) lp.at((int64_t) i, ss.targets[i]);
            total_tokens++;
        }
    }
    if (total_tokens == 0) throw_data("eval: no supervised tokens");
    if (out_tokens) *out_tokens = total_tokens;
    return std::exp(total_nll / (double) total_tokens);
}

namespace {

train_result train_sft(const run_config & cfg, const train_options & opts, step_state & st) {
    const auto records = load_instructions(cfg.train_data);
    std::vector<rendered_example> rendered;
    rendered.reserve(records.size());
    for (size_t i = 0; i < records.size(); i++) {
        rendered.push_back(render_instruction(records[i], (int64_t) i));
        if ((int64_t) rendered.back().tokens.size() > cfg.model.max_ctx) {
            throw_data(cfg.train_data + ": record " + std::to_string(i + 1) + " longer than max context");
        }
    }
    const auto sequences = pack_examples(rendered, cfg.model.max_ctx);
    const int64_t n_seq = (int64_t) sequences.size();
    const int64_t steps_per_epoch = (n_seq + cfg.batch_size - 1) / cfg.batch_size;

    std::vector<instruction_record> eval_records;
    if (!cfg.eval_data.empty()) eval_records = load_instructions(cfg.eval_data);

    const std::string root = checkpoint_root(cfg, opts);
    auto save = [&](int64_t step) {
        const std::string dir = (fs::path(root) / ("step_" + std::to_string(step))).string();
        save_checkpoint(dir, st.params, &st.opt, step, st.seed);
        return dir;
    };

    train_result res;
    res.final_step = st.start_step;
    if (st.start_step == 0 && opts.resume_dir.empty()) res.final_checkpoint = save(0);

    epoch_order shuffler;
    int64_t executed = 0;
    for (int64_t step = st.start_step + 1; step <= cfg.optimizer.total_iters; step++) {
        if (opts.max_steps > 0 && executed >= opts.max_steps) break;
        const int64_t epoch = (step - 1) / steps_per_epoch;
        const int64_t slot = (step - 1) % steps_per_epoch;
        const auto & order = shuffler.get(epoch, n_seq, st.seed);

        tape<float> t;
        auto ids = register_params(t, st.params);
        tape<float>::vid loss_sum = -1;
        int64_t batch_tokens = 0;
        for (int64_t b = slot * cfg.batch_size; b < std::min(n_seq, (slot + 1) * cfg.batch_size); b++) {
            const packed_sequence & seq = sequences[(size_t) order[(size_t) b]];
            auto fwd = build_forward(t, ids, cfg.model, seq.tokens, seq.segments);
            for (size_t s = 0; s < seq.example_ids.size(); s++) {
                if (seq.example_ids[s] < 0) continue; // padding segment
                std::vector<uint8_t> seg_mask(seq.tokens.size(), 0);
                double weight = 1.0;
                bool any = false;
                for (size_t i = 0; i < seq.tokens.size(); i++) {
                    if (seq.segments[i] != (int32_t) s || !seq.target_mask[i]) continue;
                    seg_mask[i] = 1;
                    weight = seq.weights[i];
                    any = true;
                    batch_tokens++;
                }
                if (!any) continue;
                auto term = wicel_example(t, fwd.logprobs, seq.targets, std::move(seg_mask), weight);
                loss_sum = loss_sum < 0 ? term : t.add(loss_sum, term);
            }
        }
        if (loss_sum < 0) throw_data("train: step " + std::to_string(step) + " has no supervised tokens");
        auto loss = t.scale(loss_sum, 1.0f / (float) batch_tokens);
        const double loss_val = (double) t.value(loss).item();

        auto grads = t.gradients(loss);
        const double grad_norm = clip_grads(grads, cfg.optimizer.clip_norm);
        const double lr = adaptive_lr(cosine_lr(step, cfg.optimizer), batch_tokens, cfg.optimizer);
        adamw_step(st.params, grads, st.opt, lr, cfg.optimizer);
        executed++;
        res.final_step = step;
        res.final_loss = loss_val;

        emit(opts, metrics_line({{"step", step}, {"lr", lr}, {"loss", loss_val},
                                 {"tokens", batch_tokens}, {"grad_norm", grad_norm}}));
        if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) {
            const double ppl = eval_perplexity(st.params, eval_records);
            emit(opts, metrics_line({{"step", step}, {"eval_ppl", ppl}}));
        }
        const bool last = step == cfg.optimizer.total_iters ||
                          (opts.max_steps > 0 && executed >= opts.max_steps);
        if ((cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) || last) {
            res.final_checkpoint = save(step);
        }
    }
    if (res.final_checkpoint.empty()) res.final_checkpoint = save(res.final_step);
    return res;
}

struct pref_pair {
    scored_sequence w, l;
    double ref_w = 0.0, ref_l = 0.0;
};

train_result train_dpo(const run_config & cfg, const train_options & opts, step_state & st) {
    const bool with_penalty = cfg.loss_mode == "dpop";
    const auto records = load_preferences(cfg.train_data);

    std::vector<pref_pair> pairs;
    pairs.reserve(records.size());
    for (size_t i = 0; i < records.size(); i++) {
        auto messages = records[i].prompt;
        messages.push_back({"assistant", records[i].chosen});
        pref_pair pp;
        pp.w = score_render(render_chat(messages), true);
        messages.back().content = records[i].rejected;
        pp.l = score_render(render_chat(messages), true);
        if ((int64_t) pp.w.tokens.size() > cfg.model.max_ctx ||
            (int64_t) pp.l.tokens.size() > cfg.model.max_ctx) {
            throw_data(cfg.train_data + ": record " + std::to_string(i + 1) + " longer than max context");
        }
        pairs.push_back(std::move(pp));
    }

    // frozen reference scores, computed once per invocation
    {
        const loaded_checkpoint ref = load_checkpoint(cfg.reference_checkpoint);
        if (!(ref.params.config == cfg.model)) {
            throw_config("reference_checkpoint model does not match run config");
        }
        for (pref_pair & pp : pairs) {
            for (auto * side : {&pp.w, &pp.l}) {
                tape<float> t(false);
                auto ids = register_params(t, ref.params);
                auto fwd = build_forward(t, ids, cfg.model, side->tokens);
                const tensor<float> & lp = t.value(fwd.logprobs);
                double sum = 0.0;
                for (size_t i = 0; i < side->tmask.size(); i++) {
                    if (side->tmask[i]) sum += (double) lp.at((int64_t) i, side->targets[i]);
                }
                (side == &pp.w ? pp.ref_w : pp.ref_l) = sum;
            }
        }
    }

    std::vector<instruction_record> eval_records;
    if (!cfg.eval_data.empty()) eval_records = load_instructions(cfg.eval_data);

    const int64_t n_pairs = (int64_t) pairs.size();
    const int64_t steps_per_epoch = (n_pairs + cfg.batch_size - 1) / cfg.batch_size;
    const std::string root = checkpoint_root(cfg, opts);
    auto save = [&](int64_t step) {
        const std::string dir = (fs::path(root) / ("step_" + std::to_string(step))).string();
        save_checkpoint(dir, st.params, &st.opt, step, st.seed);
        return dir;
    };

    train_result res;
    res.final_step = st.start_step;
    if (st.start_step == 0 && opts.resume_dir.empty()) res.final_checkpoint = save(0);

    epoch_order shuffler;
    int64_t executed = 0;
    for (int64_t step = st.start_step + 1; step <= cfg.optimizer.total_iters; step++) {
        if (opts.max_steps > 0 && executed >= opts.max_steps) break;
        const int64_t epoch = (step - 1) / steps_per_epoch;
        const int64_t slot = (step - 1) % steps_per_epoch;
        const auto & order = shuffler.get(epoch, n_pairs, st.seed);

        tape<float> t;
        auto ids = register_params(t, st.params);
        tape<float>::vid loss_sum = -1;
        int64_t batch_tokens = 0, batch_pairs = 0;
        double margin_sum = 0.0, penalty_sum = 0.0;
        for (int64_t b = slot * cfg.batch_size; b < std::min(n_pairs, (slot + 1) * cfg.batch_size); b++) {
            const pref_pair & pp = pairs[(size_t) order[(size_t) b]];
            auto fw = build_forward(t, ids, cfg.model, pp.w.tokens);
            auto lw = t.neg(masked_nll_sum(t, fw.logprobs, pp.w.targets, pp.w.tmask));
            auto fl = build_forward(t, ids, cfg.model, pp.l.tokens);
            auto ll = t.neg(masked_nll_sum(t, fl.logprobs, pp.l.targets, pp.l.tmask));
            auto rw = t.input(tensor<float>::scalar((float) pp.ref_w));
            auto rl = t.input(tensor<float>::scalar((float) pp.ref_l));
            auto term = with_penalty ? dpop_loss(t, lw, ll, rw, rl, cfg.dpo)
                                     : dpo_loss(t, lw, ll, rw, rl, cfg.dpo);
            loss_sum = loss_sum < 0 ? term : t.add(loss_sum, term);

            const double lwv = (double) t.value(lw).item();
            const double llv = (double) t.value(ll).item();
            margin_sum += cfg.dpo.beta * ((lwv - pp.ref_w) - (llv - pp.ref_l));
            penalty_sum += std::max(0.0, pp.ref_w - lwv);
            batch_tokens += pp.w.n_scored + pp.l.n_scored;
            batch_pairs++;
        }
        if (loss_sum < 0) throw_data("train: empty batch at step " + std::to_string(step));
        auto loss = t.scale(loss_sum, 1.0f / (float) batch_pairs);
        const double loss_val = (double) t.value(loss).item();

        auto grads = t.gradients(loss);
        const double grad_norm = clip_grads(grads, cfg.optimizer.clip_norm);
        const double lr = adaptive_lr(cosine_lr(step, cfg.optimizer), batch_tokens, cfg.optimizer);
        adamw_step(st.params, grads, st.opt, lr, cfg.optimizer);
        executed++;
        res.final_step = step;
        res.final_loss = loss_val;

        emit(opts, metrics_line({{"step", step}, {"lr", lr}, {"loss", loss_val},
                                 {"margin", margin_sum / (double) batch_pairs},
                                 {"penalty", penalty_sum / (double) batch_pairs},
                                 {"tokens", batch_tokens}, {"grad_norm", grad_norm}}));
        if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) {
            const double ppl = eval_perplexity(st.params, eval_records);
            emit(opts, metrics_line({{"step", step}, {"eval_ppl", ppl}}));
        }
        const bool last = step == cfg.optimizer.total_iters ||
                          (opts.max_steps > 0 && executed >= opts.max_steps);
        if ((cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) || last) {
            res.final_checkpoint = save(step);
        }
    }
    if (res.final_checkpoint.empty()) res.final_checkpoint = save(res.final_step);
    return res;
}

} // namespace

train_result train_run(const run_config & cfg, const train_options & opts) {
    cfg.validate();
    step_state st = prepare_state(cfg, opts);
    if (cfg.loss_mode == "sft") return train_sft(cfg, opts, st);
    return train_dpo(cfg, opts, st);
}

} // namespace ptlab
