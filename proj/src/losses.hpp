#pragma once

#include "model.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ptlab {

struct dpo_config {
    double beta   = 0.05;
    double lambda = 2.5;

    void validate() const {
        if (!(beta > 0.0)) throw_config("dpo: beta must be positive");
        if (lambda < 0.0) throw_config("dpo: lambda must be non-negative");
    }
};

// -log sigmoid(z) computed as softplus(-z), stable for any z
inline double neg_log_sigmoid(double z) {
    const double nz = -z;
    if (nz > 30.0) return nz + std::log1p(std::exp(-nz));
    return std::log1p(std::exp(nz));
}

// mean negative log-likelihood over mask-true positions
template <typename T>
typename tape<T>::vid masked_ce(tape<T> & t, typename tape<T>::vid logprobs,
                                std::vector<int32_t> targets, std::vector<uint8_t> mask) {
    return t.masked_nll(logprobs, std::move(targets), std::move(mask), true);
}

// summed negative log-likelihood over mask-true positions
template <typename T>
typename tape<T>::vid masked_nll_sum(tape<T> & t, typename tape<T>::vid logprobs,
                                     std::vector<int32_t> targets, std::vector<uint8_t> mask) {
    return t.masked_nll(logprobs, std::move(targets), std::move(mask), false);
}

inline void check_example_weight(double w) {
    if (!(w > 0.0) || w > 1.0) {
        throw_config("instruction weight " + std::to_string(w) + " outside (0, 1]");
    }
}

// one example's contribution to the weighted instruction loss: its quality
// weight times its summed mask-true negative log-likelihood. The batch loss
// divides the summed contributions by the batch's total mask-true count.
template <typename T>
typename tape<T>::vid wicel_example(tape<T> & t, typename tape<T>::vid logprobs,
                                    std::vector<int32_t> targets, std::vector<uint8_t> mask, double weight) {
    check_example_weight(weight);
    return t.scale(masked_nll_sum(t, logprobs, std::move(targets), std::move(mask)), (T) weight);
}

// log P(response | prompt) under the model: forward on prompt+response, then
// the summed log-probability of each response token given its predecessors
template <typename T>
typename tape<T>::vid seq_logprob(tape<T> & t, const std::map<std::string, typename tape<T>::vid> & ids,
                                  const model_config & cfg, const std::vector<int32_t> & prompt,
                                  const std::vector<int32_t> & response) {
    if (prompt.empty()) throw error(errc::argument, "seq_logprob: empty prompt");
    if (response.empty()) throw error(errc::argument, "seq_logprob: empty response");
    std::vector<int32_t> tokens = prompt;
    tokens.insert(tokens.end(), response.begin(), response.end());

    auto fwd = build_forward(t, ids, cfg, tokens);

    const size_t len = tokens.size();
    std::vector<int32_t> targets(len, 0);
    std::vector<uint8_t> mask(len, 0);
    for (size_t i = 0; i + 1 < len; i++) {
        targets[i] = tokens[i + 1];
        mask[i] = i + 1 >= prompt.size();
    }
    return t.neg(masked_nll_sum(t, fwd.logprobs, std::move(targets), std::move(mask)));
}

// ---- preference losses over sequence log-probabilities ----
//
// Reference log-probs enter as constants; only the policy terms carry grad.

template <typename T>
typename tape<T>::vid dpo_margin(tape<T> & t, typename tape<T>::vid lp_w_policy, typename tape<T>::vid lp_l_policy,
                                 typename tape<T>::vid lp_w_ref, typename tape<T>::vid lp_l_ref, double beta) {
    auto delta = t.sub(t.sub(lp_w_policy, lp_w_ref), t.sub(lp_l_policy, lp_l_ref));
    return t.scale(delta, (T) beta);
}

template <typename T>
typename tape<T>::vid dpo_loss(tape<T> & t, typename tape<T>::vid lp_w_policy, typename tape<T>::vid lp_l_policy,
                               typename tape<T>::vid lp_w_ref, typename tape<T>::vid lp_l_ref,
                               const dpo_config & cfg) {
    cfg.validate();
    auto margin = dpo_margin(t, lp_w_policy, lp_l_policy, lp_w_ref, lp_l_ref, cfg.beta);
    return t.softplus(t.neg(margin));
}

// adds a hinge penalty that punishes the policy for dropping below the
// reference on the chosen completion
template <typename T>
typename tape<T>::vid dpop_loss(tape<T> & t, typename tape<T>::vid lp_w_policy, typename tape<T>::vid lp_l_policy,
                                typename tape<T>::vid lp_w_ref, typename tape<T>::vid lp_l_ref,
                                const dpo_config & cfg) {
    cfg.validate();
    auto margin = dpo_margin(t, lp_w_policy, lp_l_policy, lp_w_ref, lp_l_ref, cfg.beta);
    auto penalty = t.scale(t.relu(t.sub(lp_w_ref, lp_w_policy)), (T) cfg.lambda);
    return t.softplus(t.neg(t.sub(margin, penalty)));
}

// scalar mirrors of the taped losses, for metrics and verification

inline void check_logprob_inputs(double a, double b, double c, double d) {
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c) || !std::isfinite(d)) {
        throw error(errc::numeric, "preference loss: non-finite sequence log-probability");
    }
}

inline double dpo_loss_value(double lp_w_policy, double lp_l_policy, double lp_w_ref, double lp_l_ref,
                             const dpo_config & cfg) {
    cfg.validate();
    check_logprob_inputs(lp_w_policy, lp_l_policy, lp_w_ref, lp_l_ref);
    const double margin = cfg.beta * ((lp_w_policy - lp_w_ref) - (lp_l_policy - lp_l_ref));
    return neg_log_sigmoid(margin);
}

inline double dpop_loss_value(double lp_w_policy, double lp_l_policy, double lp_w_ref, double lp_l_ref,
                              const dpo_config & cfg) {
    cfg.validate();
    check_logprob_inputs(lp_w_policy, lp_l_policy, lp_w_ref, lp_l_ref);
    const double margin = cfg.beta * ((lp_w_policy - lp_w_ref) - (lp_l_policy - lp_l_ref));
    const double gap = lp_w_ref - lp_w_policy;
    const double penalty = cfg.lambda * (gap > 0.0 ? gap : 0.0);
    return neg_log_sigmoid(margin - penalty);
}

} // namespace ptlab
