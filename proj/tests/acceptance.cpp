#include "data.hpp"
#include "gradcheck.hpp"
#include "losses.hpp"
#include "merge.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "specmon.hpp"
#include "train.hpp"
#include "upscale.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <string>
#include <vector>

// one binary, one pass/fail line per criterion, nonzero exit on any failure

namespace {

using namespace ptlab;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

struct check_failure {
    std::string what;
};

void expect(bool ok, const std::string & what) {
    if (!ok) throw check_failure{what};
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "ptlab_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::vector<float> flat_weights(const param_set<float> & p) {
    std::vector<float> out;
    for (auto & [name, t] : p.tensors) out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

param_set<float> flat_model(const std::string & name, std::vector<float> w) {
    param_set<float> p;
    const int64_t n = (int64_t) w.size();
    p.tensors.emplace_back(name, tensor<float>({n}, std::move(w)));
    return p;
}

std::vector<char> slurp_bytes(const fs::path & path) {
    std::ifstream in(path, std::ios::binary);
    expect(in.good(), "cannot open " + path.string());
    return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void expect_same_file(const fs::path & a, const fs::path & b) {
    expect(slurp_bytes(a) == slurp_bytes(b), a.string() + " and " + b.string() + " differ");
}

std::vector<double> pareto_sample(size_t n, double alpha, double xmin, uint64_t seed) {
    counter_rng rng(seed, stream_id("test.pareto"));
    std::vector<double> xs(n);
    for (double & x : xs) x = xmin * std::pow(1.0 - rng.next_double(), -1.0 / (alpha - 1.0));
    return xs;
}

tensor<float> diag_sqrt(const std::vector<double> & lambdas) {
    const int64_t n = (int64_t) lambdas.size();
    tensor<float> w({n, n});
    for (int64_t i = 0; i < n; i++) w.at(i, i) = (float) std::sqrt(lambdas[(size_t) i]);
    return w;
}

// artifacts shared between the fine-tuning, preference, and resume criteria
struct sft_artifacts {
    run_config run;
    std::string checkpoint;
    std::string midpoint;
    std::string early;
    int64_t steps = 0;
    std::vector<std::pair<std::string, std::string>> qa;
};
sft_artifacts g_sft;

constexpr int64_t SFT_STEPS = 200;

// ---- 1: end-to-end gradients ----

std::string c_gradients() {
    const auto t0 = clock_type::now();
    model_config cfg;
    cfg.n_layers     = 2;
    cfg.dim          = 16;
    cfg.n_heads      = 2;
    cfg.n_kv_heads   = 1;
    cfg.head_size    = 8;
    cfg.intermediate = 32;
    cfg.vocab        = 64;
    cfg.rope_theta   = 10000.0;
    cfg.max_ctx      = 48;
    param_set<double> p = init_params(cfg, 42).cast<double>();

    instruction_record r0, r1;
    r0.messages = {{"user", "add 2 and 3"}, {"assistant", "five"}};
    r0.weight = 1.0;
    r1.messages = {{"user", "name a tree"}, {"assistant", "cedar"}};
    r1.weight = 0.6;
    const std::vector<rendered_example> rendered = {render_instruction(r0, 0), render_instruction(r1, 1)};
    auto packed = pack_examples(rendered, cfg.max_ctx);
    // fold byte and control ids into the toy vocabulary
    for (auto & seq : packed) {
        for (auto & tok : seq.tokens) tok %= (int32_t) cfg.vocab;
        for (auto & tok : seq.targets) tok %= (int32_t) cfg.vocab;
    }

    auto build = [&](tape<double> & t, const named_tensors<double> & params) {
        param_set<double> ps;
        ps.config = cfg;
        ps.tensors = params;
        auto ids = register_params(t, ps);
        tape<double>::vid loss_sum = -1;
        int64_t batch_tokens = 0;
        for (const packed_sequence & seq : packed) {
            auto fwd = build_forward(t, ids, cfg, seq.tokens, seq.segments);
            for (size_t s = 0; s < seq.example_ids.size(); s++) {
                if (seq.example_ids[s] < 0) continue;
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
        expect(loss_sum >= 0 && batch_tokens > 0, "no supervised tokens after packing");
        return t.scale(loss_sum, 1.0 / (double) batch_tokens);
    };
    const fd_report rep = finite_diff_check(build, p.tensors, 1e-5, 1e-6);
    expect(rep.max_rel_err < 1e-4, "max relative error " + fmt(rep.max_rel_err) + " at " + rep.worst_param);
    const double secs = seconds_since(t0);
    expect(secs < 60.0, "took " + fmt(secs) + "s");
    return "max rel err " + fmt(rep.max_rel_err) + " over every parameter, " + fmt(secs) + "s";
}

// ---- 2: adaptive learning rate ----

std::string c_adaptive_lr() {
    opt_config cfg;
    cfg.peak_lr = 1e-3;
    cfg.total_iters = 1;
    cfg.alr_enabled = true;
    cfg.baseline_batch_tokens = 2048;

    double worst = 0.0;
    int n = 0;
    for (double base : {7e-6, 1e-4, 3e-3, 0.5}) {
        for (int64_t toks : {1ll, 64ll, 2048ll, 8192ll, 1048576ll}) {
            const double got = adaptive_lr(base, toks, cfg);
            const double want = base * std::sqrt((double) toks / 2048.0);
            worst = std::max(worst, std::abs(got - want) / want);
            n++;
        }
        expect(adaptive_lr(base, 2048, cfg) == base, "equal batch must be the identity");
        expect(adaptive_lr(base, 4 * 2048, cfg) == 2.0 * base, "4x batch must double the rate");
    }
    expect(n == 20, "expected 20 pairs");
    expect(worst <= 1e-12, "relative error " + fmt(worst));
    return "20 batch sizes match the square root law to 1e-12";
}

// ---- 3: quality-weighted loss ----

std::string c_wicel() {
    model_config cfg;
    cfg.n_layers     = 1;
    cfg.dim          = 8;
    cfg.n_heads      = 2;
    cfg.n_kv_heads   = 1;
    cfg.head_size    = 4;
    cfg.intermediate = 16;
    cfg.vocab        = 16;
    cfg.rope_theta   = 10000.0;
    cfg.max_ctx      = 16;
    const param_set<double> p = init_params(cfg, 9).cast<double>();
    const std::vector<int32_t> tokens  = {3, 1, 4, 1, 5, 9, 2, 6};
    const std::vector<int32_t> targets = {1, 4, 1, 5, 9, 2, 6, 5};
    const std::vector<uint8_t> mask    = {1, 1, 0, 1, 1, 0, 1, 1};

    auto eval = [&](double w, bool weighted, std::map<std::string, tensor<double>> & grads) {
        tape<double> t;
        auto ids = register_params(t, p);
        auto fwd = build_forward(t, ids, cfg, tokens);
        auto loss = weighted ? wicel_example(t, fwd.logprobs, targets, mask, w)
                             : masked_nll_sum(t, fwd.logprobs, targets, mask);
        grads = t.gradients(loss);
        return t.value(loss).item();
    };

    std::map<std::string, tensor<double>> g_plain, g_unit;
    const double plain = eval(1.0, false, g_plain);
    const double unit = eval(1.0, true, g_unit);
    expect(unit == plain, "unit weight must equal the unweighted masked loss bit for bit");
    for (const auto & [name, g] : g_plain) {
        expect(g.data == g_unit.at(name).data, "unit weight changed the gradient of " + name);
    }

    double worst = 0.0;
    for (double w : {0.25, 0.5, 1.0}) {
        std::map<std::string, tensor<double>> g_w;
        const double got = eval(w, true, g_w);
        worst = std::max(worst, std::abs(got - w * plain) / std::abs(w * plain));
        for (const auto & [name, g] : g_plain) {
            const tensor<double> & gw = g_w.at(name);
            for (int64_t i = 0; i < g.numel(); i++) {
                const double want = w * g.at(i);
                const double den = std::max(std::abs(want), 1e-30);
                worst = std::max(worst, std::abs(gw.at(i) - want) / den);
            }
        }
    }
    expect(worst <= 1e-10, "linearity error " + fmt(worst));
    return "unit weight bit-equal, loss and gradients linear in the weight to 1e-10";
}

// ---- 4: preference losses ----

std::string c_preference_losses() {
    for (double beta : {0.01, 0.05, 0.5, 1.0, 5.0}) {
        dpo_config cfg;
        cfg.beta = beta;
        const double at_ref = dpo_loss_value(-3.7, -9.1, -3.7, -9.1, cfg);
        expect(std::abs(at_ref - std::log(2.0)) <= 1e-12, "loss at the reference policy " + fmt(at_ref));
        const double zero_delta = dpo_loss_value(-12.0, -10.0, -10.0, -8.0, cfg);
        expect(std::abs(zero_delta - std::log(2.0)) <= 1e-12, "zero margin loss " + fmt(zero_delta));
    }

    dpo_config cfg;
    cfg.beta = 0.05;
    cfg.lambda = 2.5;
    dpo_config no_penalty = cfg;
    no_penalty.lambda = 0.0;
    const double inputs[][4] = {{-9.3, -4.2, -7.7, -4.9}, {-12.0, -10.0, -10.0, -8.0}, {-2.0, -30.0, -5.0, -1.0}};
    for (const auto & in : inputs) {
        const double a = dpo_loss_value(in[0], in[1], in[2], in[3], cfg);
        const double b = dpop_loss_value(in[0], in[1], in[2], in[3], no_penalty);
        expect(a == b, "lambda 0 must reduce to the plain loss bit for bit");
    }

    const double hand = dpop_loss_value(-12.0, -10.0, -10.0, -8.0, cfg);
    expect(std::abs(hand - 5.006715) <= 1e-6, "hand value " + fmt(hand));
    expect(std::abs(hand - 5.006715348489118) <= 1e-12, "hand value drifted " + fmt(hand));
    return "log 2 at zero margin for five betas, lambda 0 reduction, hand value to 1e-6";
}

// ---- 5: depth upscaling ----

void expect_upscale_copies(const param_set<float> & src, const param_set<float> & up,
                           const std::vector<int32_t> & mapping) {
    size_t checked = 0;
    for (const auto & [name, t] : up.tensors) {
        std::string want = name;
        if (name.rfind("blk.", 0) == 0) {
            const size_t dot = name.find('.', 4);
            const int64_t layer = std::stoll(name.substr(4, dot - 4));
            want = "blk." + std::to_string(mapping[(size_t) layer]) + name.substr(dot);
        }
        expect(t.data == src.find(want).data, name + " is not a copy of " + want);
        checked++;
    }
    expect(checked == up.tensors.size() && checked > 0, "tensor walk came up short");
}

std::string c_upscale() {
    const std::vector<int32_t> small = upscale_mapping(4, 1);
    expect(small == std::vector<int32_t>({0, 1, 2, 1, 2, 3}), "4 layer mapping is wrong");

    const std::vector<int32_t> big = upscale_mapping(32, 7);
    expect(big.size() == 50, "expected 50 layers, got " + std::to_string(big.size()));
    for (int32_t i = 0; i < 25; i++) {
        expect(big[(size_t) i] == i, "front half must be layers 0..24");
        expect(big[(size_t) (25 + i)] == 7 + i, "back half must be layers 7..31");
    }

    model_config cfg;
    cfg.n_layers     = 32;
    cfg.dim          = 8;
    cfg.n_heads      = 2;
    cfg.n_kv_heads   = 1;
    cfg.head_size    = 4;
    cfg.intermediate = 16;
    cfg.vocab        = 16;
    cfg.rope_theta   = 10000.0;
    cfg.max_ctx      = 16;
    const param_set<float> src = init_params(cfg, 5);
    const param_set<float> up = depth_upscale(src, 7);
    expect(up.config.n_layers == 50, "upscaled layer count " + std::to_string(up.config.n_layers));
    expect_upscale_copies(src, up, big);

    model_config cfg4 = cfg;
    cfg4.n_layers = 4;
    const param_set<float> src4 = init_params(cfg4, 6);
    const param_set<float> up4 = depth_upscale(src4, 1);
    expect(up4.config.n_layers == 6, "small upscaled layer count");
    expect_upscale_copies(src4, up4, small);
    return "32 layers with overlap 7 give 50, every layer a bit-exact copy of its source";
}

// ---- 6: supervised fine-tuning ----

std::string c_sft() {
    const auto t0 = clock_type::now();
    const fs::path dir = work_dir() / "sft";
    fs::create_directories(dir);

    const char * words[8] = {"amber", "basalt", "cedar", "delta", "ember", "fjord", "garnet", "harbor"};
    std::vector<std::pair<std::string, std::string>> qa;
    {
        std::ofstream out(dir / "train.jsonl");
        for (int i = 0; i < 32; i++) {
            const std::string q = "recite entry " + std::to_string(i);
            const std::string a = std::string(words[i % 8]) + " " + words[(i / 8 + i % 8) % 8];
            qa.emplace_back(q, a);
            nlohmann::json j;
            j["messages"] = nlohmann::json::array({
                {{"role", "user"}, {"content", q}},
                {{"role", "assistant"}, {"content", a}},
            });
            out << j.dump() << "\n";
        }
    }

    run_config cfg;
    cfg.model.n_layers     = 2;
    cfg.model.dim          = 64;
    cfg.model.n_heads      = 4;
    cfg.model.n_kv_heads   = 2;
    cfg.model.head_size    = 16;
    cfg.model.intermediate = 128;
    cfg.model.vocab        = 300;
    cfg.model.rope_theta   = 10000.0;
    cfg.model.max_ctx      = 128;
    cfg.optimizer.peak_lr      = 1.5e-2;
    cfg.optimizer.min_lr       = 1.5e-3;
    cfg.optimizer.warmup_iters = 50;
    cfg.optimizer.total_iters  = 2000;
    cfg.train_data = (dir / "train.jsonl").string();
    cfg.batch_size = 8;
    cfg.seed = 1;
    cfg.checkpoint_interval = SFT_STEPS / 4;
    cfg.checkpoint_dir = (dir / "ckpt_a").string();

    train_options opts;
    opts.max_steps = SFT_STEPS;
    const train_result ra = train_run(cfg, opts);
    const double secs_a = seconds_since(t0);
    expect(ra.final_step == SFT_STEPS, "stopped at step " + std::to_string(ra.final_step));
    expect(ra.final_loss < 0.05, "loss " + fmt(ra.final_loss) + " at step " + std::to_string(ra.final_step));
    expect(secs_a < 300.0, "took " + fmt(secs_a) + "s");

    // a second identical run must agree bit for bit
    run_config twin = cfg;
    twin.checkpoint_dir = (dir / "ckpt_b").string();
    const train_result rb = train_run(twin, opts);
    expect(ra.final_loss == rb.final_loss, "rerun loss differs");
    expect_same_file(fs::path(ra.final_checkpoint) / "weights.bin", fs::path(rb.final_checkpoint) / "weights.bin");
    expect_same_file(fs::path(ra.final_checkpoint) / "manifest.json", fs::path(rb.final_checkpoint) / "manifest.json");

    g_sft.run = cfg;
    g_sft.checkpoint = ra.final_checkpoint;
    g_sft.midpoint = (fs::path(cfg.checkpoint_dir) / ("step_" + std::to_string(SFT_STEPS / 2))).string();
    g_sft.early = (fs::path(cfg.checkpoint_dir) / ("step_" + std::to_string(SFT_STEPS / 4))).string();
    g_sft.steps = SFT_STEPS;
    g_sft.qa = std::move(qa);
    return "loss " + fmt(ra.final_loss) + " at step " + std::to_string(ra.final_step) +
           ", twin runs bit-identical, " + fmt(secs_a) + "s";
}

// ---- 7: preference optimization ----

std::string c_dpop() {
    expect(!g_sft.early.empty(), "needs the fine-tuned model from the previous criterion");
    const fs::path dir = work_dir() / "dpop";
    fs::create_directories(dir);

    {
        std::ofstream out(dir / "prefs.jsonl");
        for (int i = 0; i < 16; i++) {
            const auto & [q, a] = g_sft.qa[(size_t) i];
            std::string bad(a.rbegin(), a.rend());
            nlohmann::json j;
            j["prompt"] = nlohmann::json::array({{{"role", "user"}, {"content", q}}});
            j["chosen"] = a;
            j["rejected"] = bad;
            j["score_chosen"] = 9;
            j["score_rejected"] = 1;
            out << j.dump() << "\n";
        }
    }

    run_config cfg;
    cfg.model = g_sft.run.model;
    cfg.loss_mode = "dpop";
    cfg.dpo.beta   = 0.05;
    cfg.dpo.lambda = 2.5;
    cfg.optimizer.peak_lr      = 5e-4;
    cfg.optimizer.min_lr       = 5e-4;
    cfg.optimizer.warmup_iters = 0;
    cfg.optimizer.total_iters  = 200;
    cfg.train_data = (dir / "prefs.jsonl").string();
    // the quarter-trained checkpoint still has headroom on the chosen responses
    cfg.reference_checkpoint = g_sft.early;
    cfg.batch_size = 8;
    cfg.seed = 2;
    cfg.checkpoint_dir = (dir / "ckpt").string();

    std::vector<double> margins, penalties;
    train_options opts;
    opts.metrics = [&](const std::string & line) {
        const nlohmann::json j = nlohmann::json::parse(line);
        if (!j.contains("margin")) return;
        margins.push_back(j["margin"].get<double>());
        penalties.push_back(j["penalty"].get<double>());
    };
    train_run(cfg, opts);

    expect(margins.size() == 200, "expected 200 steps");
    expect(margins.back() > margins.front(), "margin did not increase: " + fmt(margins.front()) +
                                                 " -> " + fmt(margins.back()));
    expect(margins.back() > 0.0, "final margin " + fmt(margins.back()));
    expect(penalties.back() <= penalties.front(),
           "penalty grew: " + fmt(penalties.front()) + " -> " + fmt(penalties.back()));
    return "margin " + fmt(margins.front()) + " -> " + fmt(margins.back()) + ", penalty " +
           fmt(penalties.front()) + " -> " + fmt(penalties.back());
}

// ---- 8: packed batches ----

std::string c_packing() {
    model_config cfg;
    cfg.n_layers     = 1;
    cfg.dim          = 16;
    cfg.n_heads      = 2;
    cfg.n_kv_heads   = 1;
    cfg.head_size    = 8;
    cfg.intermediate = 32;
    cfg.vocab        = tokenizer::vocab_size;
    cfg.rope_theta   = 10000.0;
    cfg.max_ctx      = 128;
    const param_set<double> p = init_params(cfg, 3).cast<double>();

    const char * pool[12] = {"ash",  "bay",  "cove", "dune", "elm",   "fern",
                             "glen", "heath", "isle", "knoll", "loch", "mere"};
    counter_rng rng(17, stream_id("acceptance.pack"));
    std::vector<rendered_example> rendered;
    for (int e = 0; e < 50; e++) {
        auto sentence = [&](int lo, int hi) {
            const int64_t n = lo + (int64_t) rng.next_below((uint64_t) (hi - lo + 1));
            std::string s;
            for (int64_t w = 0; w < n; w++) {
                if (w) s += ' ';
                s += pool[rng.next_below(12)];
            }
            return s;
        };
        instruction_record rec;
        rec.messages = {{"user", sentence(2, 6)}, {"assistant", sentence(1, 5)}};
        rendered.push_back(render_instruction(rec, e));
    }
    const auto packed = pack_examples(rendered, cfg.max_ctx);
    expect(packed.size() > 1, "50 examples should span several sequences");
    std::vector<int> seen(rendered.size(), 0);
    for (const packed_sequence & seq : packed) {
        for (int64_t id : seq.example_ids) {
            if (id >= 0) seen[(size_t) id]++;
        }
    }
    for (size_t e = 0; e < seen.size(); e++) {
        expect(seen[e] == 1, "example " + std::to_string(e) + " packed " + std::to_string(seen[e]) + " times");
    }

    double packed_sum = 0.0;
    for (const packed_sequence & seq : packed) {
        tape<double> t(false);
        auto ids = register_params(t, p);
        auto fwd = build_forward(t, ids, cfg, seq.tokens, seq.segments);
        const tensor<double> lp = t.value(fwd.logprobs);
        for (size_t i = 0; i < seq.tokens.size(); i++) {
            if (seq.target_mask[i]) packed_sum -= lp.at((int64_t) i, seq.targets[i]);
        }
    }

    double solo_sum = 0.0;
    for (const rendered_example & r : rendered) {
        tape<double> t(false);
        auto ids = register_params(t, p);
        auto fwd = build_forward(t, ids, cfg, r.tokens);
        const tensor<double> lp = t.value(fwd.logprobs);
        for (size_t i = 0; i + 1 < r.tokens.size(); i++) {
            if (r.mask[i + 1]) solo_sum -= lp.at((int64_t) i, r.tokens[i + 1]);
        }
    }

    const double rel = std::abs(packed_sum - solo_sum) / std::abs(solo_sum);
    expect(rel <= 1e-6, "summed loss differs by " + fmt(rel) + " relative");
    return "50 examples in " + std::to_string(packed.size()) + " sequences, loss sums agree to " + fmt(rel);
}

// ---- 9: model merging ----

std::string c_merging() {
    model_config cfg;
    cfg.n_layers     = 1;
    cfg.dim          = 8;
    cfg.n_heads      = 2;
    cfg.n_kv_heads   = 1;
    cfg.head_size    = 4;
    cfg.intermediate = 16;
    cfg.vocab        = 16;
    cfg.rope_theta   = 10000.0;
    cfg.max_ctx      = 16;
    const param_set<float> a = init_params(cfg, 11);
    const param_set<float> self = merge_linear<float>({&a, &a}, {1.0, 1.0});
    expect(flat_weights(self) == flat_weights(a), "self-merge changed the weights");

    // task vectors [-3,+1] and [+1,+1] elect signs [-,+] and average to [-3,1]
    {
        const param_set<float> anchor = flat_model("w", {5.0f, 5.0f});
        const param_set<float> m1 = flat_model("w", {2.0f, 6.0f});
        const param_set<float> m2 = flat_model("w", {6.0f, 6.0f});
        const param_set<float> ties = merge_ties<float>({&m1, &m2}, anchor, 1.0);
        expect(ties.find("w").at(0) == 2.0f && ties.find("w").at(1) == 6.0f,
               "ties trace gave [" + fmt(ties.find("w").at(0)) + "," + fmt(ties.find("w").at(1)) + "]");
    }
    {
        const param_set<float> anchor = flat_model("w", {10.0f, 20.0f});
        const param_set<float> m1 = flat_model("w", {6.0f, 21.0f});
        const param_set<float> m2 = flat_model("w", {8.0f, 21.0f});
        const param_set<float> m3 = flat_model("w", {11.0f, 19.0f});
        const param_set<float> ties = merge_ties<float>({&m1, &m2, &m3}, anchor, 1.0);
        expect(ties.find("w").at(0) == 7.0f && ties.find("w").at(1) == 21.0f,
               "three-model trace gave [" + fmt(ties.find("w").at(0)) + "," + fmt(ties.find("w").at(1)) + "]");
    }

    // parallel task vectors have angle zero, so the merge is the plain average
    const param_set<float> anchor = flat_model("w", {0.0f, 0.0f, 0.0f, 0.0f});
    const param_set<float> v1 = flat_model("w", {0.5f, -0.25f, 1.0f, 2.0f});
    const param_set<float> v2 = flat_model("w", {1.0f, -0.5f, 2.0f, 4.0f});
    const stock_result<float> stock = merge_model_stock<float>({&v1, &v2}, anchor);
    expect(stock.warnings.empty(), "unexpected model stock warning");
    double worst = 0.0;
    for (int64_t i = 0; i < 4; i++) {
        const double avg = 0.5 * ((double) v1.find("w").at(i) + (double) v2.find("w").at(i));
        worst = std::max(worst, std::abs((double) stock.merged.find("w").at(i) - avg));
    }
    expect(worst <= 1e-10, "model stock drifted " + fmt(worst) + " from the average");
    return "self-merge identity, ties sign election, aligned model stock averages";
}

// ---- 10: heavy-tailed spectra ----

std::string c_spectra() {
    const pl_fit hand = fit_power_law_fixed({1.0, 2.0, 4.0, 8.0}, 1.0);
    expect(std::abs(hand.alpha - 1.96180) <= 1e-4, "hand tail exponent " + fmt(hand.alpha));

    for (double alpha : {2.5, 3.5}) {
        const std::vector<double> xs = pareto_sample(5000, alpha, 1.0, alpha == 2.5 ? 101 : 102);
        const pl_fit fit = fit_power_law(xs);
        expect(std::abs(fit.alpha - alpha) <= 0.2,
               "recovered " + fmt(fit.alpha) + " for a " + fmt(alpha) + " tail");
    }

    expect(alpha_healthy(2.0) && alpha_healthy(6.0), "band must include both endpoints");
    expect(!alpha_healthy(std::nextafter(2.0, 0.0)), "band must exclude values below 2");
    expect(!alpha_healthy(std::nextafter(6.0, 7.0)), "band must exclude values above 6");
    expect(alpha_healthy(3.9), "band must include the interior");

    param_set<float> p;
    p.tensors.emplace_back("blk.0.attn_q.weight", diag_sqrt(pareto_sample(64, 3.5, 1.0, 104)));
    std::vector<double> tight(24);
    for (size_t i = 0; i < tight.size(); i++) tight[i] = 1.0 + 0.001 * (double) i;
    p.tensors.emplace_back("blk.0.ffn_up.weight", diag_sqrt(tight));
    const auto reports = spectral_report(p);
    expect(reports.size() == 2, "expected two report rows");
    expect(reports[0].status == layer_report::fit_status::ok && reports[0].healthy,
           "the heavy-tailed layer must sit inside [2, 6]");
    expect(reports[1].status == layer_report::fit_status::ok && !reports[1].healthy,
           "the near-flat layer must fall outside [2, 6]");
    return "hand value, recovered tails within 0.2, band closed at 2 and 6";
}

// ---- 11: preference filtering ----

std::string c_filter() {
    auto rec = [](const char * chosen, const char * rejected, double sc, double sr) {
        preference_record r;
        r.prompt = {{"user", "q"}};
        r.chosen = chosen;
        r.rejected = rejected;
        r.score_chosen = sc;
        r.score_rejected = sr;
        return r;
    };
    const std::vector<preference_record> in = {
        rec("good", "bad", 8, 3), rec("meh", "fine", 3, 8),   rec("tie", "tie2", 5, 5),
        rec("close", "call", 6, 5), rec("also", "close", 5, 6), rec("even", "even2", 6, 6),
    };
    pref_filter_stats stats;
    const auto kept = filter_preferences(in, stats);
    expect(stats.read == 6 && stats.kept == 2 && stats.dropped == 4 && stats.swapped == 1,
           "read " + std::to_string(stats.read) + " kept " + std::to_string(stats.kept) + " dropped " +
               std::to_string(stats.dropped) + " swapped " + std::to_string(stats.swapped));
    expect(kept.size() == 2, "kept record count");
    for (const preference_record & r : kept) {
        expect(r.score_chosen - r.score_rejected >= 2.0, "kept pair with score gap below 2");
    }
    expect(kept[1].chosen == "fine" && kept[1].rejected == "meh", "swap orientation");
    return "6 read, 2 kept, 4 dropped, 1 swapped into the right order, all gaps at least 2";
}

// ---- 12: near-duplicate detection ----

std::string c_dedup() {
    constexpr int n_base = 800, n_dup = 200, doc_words = 60;
    counter_rng rng(99, stream_id("acceptance.dedup"));
    std::vector<std::string> docs(n_base + n_dup);
    for (int i = 0; i < n_base; i++) {
        std::string d;
        for (int w = 0; w < doc_words; w++) {
            if (w) d += ' ';
            d += "w" + std::to_string(rng.next_below(100000));
        }
        docs[(size_t) i] = d;
    }
    for (int j = 0; j < n_dup; j++) {
        docs[(size_t) (n_base + j)] = docs[(size_t) j] + " y" + std::to_string(j) + " z" + std::to_string(j);
    }

    // independent shingle-set oracle over the raw words
    auto shingle_set = [](const std::string & doc) {
        std::vector<std::string> ws;
        std::string w;
        for (char c : doc) {
            if (c == ' ') {
                ws.push_back(w);
                w.clear();
            } else {
                w += c;
            }
        }
        ws.push_back(w);
        std::set<std::string> out;
        for (size_t i = 0; i + 5 <= ws.size(); i++) {
            std::string s = ws[i];
            for (size_t k = 1; k < 5; k++) s += "\x1f" + ws[i + k];
            out.insert(std::move(s));
        }
        return out;
    };
    auto exact_jaccard = [](const std::set<std::string> & a, const std::set<std::string> & b) {
        size_t inter = 0;
        for (const std::string & s : a) inter += b.count(s);
        return (double) inter / (double) (a.size() + b.size() - inter);
    };
    std::vector<std::set<std::string>> sets(docs.size());
    for (size_t d = 0; d < docs.size(); d++) sets[d] = shingle_set(docs[d]);
    for (int j = 0; j < n_dup; j++) {
        expect(exact_jaccard(sets[(size_t) j], sets[(size_t) (n_base + j)]) >= 0.9, "planted pair below 0.9");
    }

    dedup_config cfg;
    const auto entries = dedup_documents(docs, cfg);
    expect(entries.size() == docs.size(), "entry count");

    int64_t found = 0, false_merges = 0;
    for (size_t d = 0; d < entries.size(); d++) {
        if (entries[d].kept) continue;
        const int64_t target = entries[d].duplicate_of;
        expect(target >= 0 && (size_t) target < d, "merge target must be an earlier document");
        if (exact_jaccard(sets[d], sets[(size_t) target]) < 0.5) false_merges++;
    }
    for (int j = 0; j < n_dup; j++) {
        const dedup_entry & e = entries[(size_t) (n_base + j)];
        if (!e.kept && e.duplicate_of == j) found++;
    }
    expect(false_merges == 0, std::to_string(false_merges) + " false merges");
    expect(found >= 190, "recall " + std::to_string(found) + "/200");
    return "recall " + std::to_string(found) + "/200, zero false merges against the exact oracle";
}

// ---- 13: interrupted training ----

std::string c_resume() {
    expect(!g_sft.midpoint.empty(), "needs the fine-tuned run from criterion 6");
    const fs::path dir = work_dir() / "resume";
    fs::create_directories(dir);

    train_options opts;
    opts.resume_dir = g_sft.midpoint;
    opts.out_dir = (dir / "ckpt").string();
    opts.max_steps = g_sft.steps - g_sft.steps / 2;
    const train_result res = train_run(g_sft.run, opts);

    expect(res.final_step == g_sft.steps, "resumed run stopped at step " + std::to_string(res.final_step));
    expect_same_file(fs::path(res.final_checkpoint) / "weights.bin", fs::path(g_sft.checkpoint) / "weights.bin");
    expect_same_file(fs::path(res.final_checkpoint) / "manifest.json",
                     fs::path(g_sft.checkpoint) / "manifest.json");
    return "midpoint restart reproduces the uninterrupted checkpoint byte for byte";
}

// ---- 14: schedule endpoints ----

std::string c_schedules() {
    auto endpoints = [](double peak, double min, int64_t warmup, int64_t total) {
        opt_config oc;
        oc.peak_lr = peak;
        oc.min_lr = min;
        oc.warmup_iters = warmup;
        oc.total_iters = total;
        expect(std::abs(cosine_lr(warmup, oc) - peak) <= 1e-12 * peak, "peak endpoint " + fmt(peak));
        expect(std::abs(cosine_lr(total, oc) - min) <= 1e-12 * min, "final endpoint " + fmt(min));
    };
    endpoints(2e-5, 9e-6, 50, 97250);
    endpoints(7e-6, 6e-7, 50, 3883);
    endpoints(7e-7, 7e-7, 50, 3800);

    opt_config flat;
    flat.peak_lr = 7e-7;
    flat.min_lr = 7e-7;
    flat.warmup_iters = 50;
    flat.total_iters = 3800;
    for (int64_t s : {50ll, 1000ll, 2345ll, 3800ll}) {
        expect(cosine_lr(s, flat) == 7e-7, "constant schedule moved at step " + std::to_string(s));
    }
    return "pretraining, fine-tuning, and preference presets hit their endpoints";
}

} // namespace

int main() {
    const std::pair<const char *, std::function<std::string()>> criteria[] = {
        {"backpropagation through render, pack, and the weighted loss matches finite differences", c_gradients},
        {"adaptive learning rate follows the square-root batch law", c_adaptive_lr},
        {"quality-weighted loss is exact at unit weight and linear in the weight", c_wicel},
        {"preference losses match their closed forms", c_preference_losses},
        {"depth upscaling duplicates the overlapped layer stack bit-exact", c_upscale},
        {"supervised fine-tuning memorizes the toy corpus deterministically", c_sft},
        {"preference optimization raises the margin without losing the chosen responses", c_dpop},
        {"packed batches score exactly like standalone examples", c_packing},
        {"linear, ties, and model stock merges match hand calculations", c_merging},
        {"tail exponent estimation recovers known spectra and flags the band", c_spectra},
        {"preference filtering drops ties and repairs swapped pairs", c_filter},
        {"near-duplicate detection is sensitive and precise on a planted corpus", c_dedup},
        {"an interrupted run resumes to the same bits as the uninterrupted run", c_resume},
        {"published learning rate schedules hit their endpoints", c_schedules},
    };

    int failed = 0;
    int idx = 0;
    for (const auto & [name, fn] : criteria) {
        idx++;
        std::string detail;
        bool ok = true;
        try {
            detail = fn();
        } catch (const check_failure & f) {
            ok = false;
            detail = f.what;
        } catch (const std::exception & e) {
            ok = false;
            detail = e.what();
        }
        if (!ok) failed++;
        std::printf("%s %2d: %s (%s)\n", ok ? "PASS" : "FAIL", idx, name, detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", idx - failed, idx);
    return failed == 0 ? 0 : 1;
}
