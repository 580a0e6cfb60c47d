#pragma once

#include "autodiff.hpp"

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ptlab {

template <typename T>
using named_tensors = std::vector<std::pair<std::string, tensor<T>>>;

struct fd_report {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central-difference verification of analytic gradients.
//
// f builds the scalar loss on the given tape from the given parameters and
// returns its node. Analytic gradients come from one taped backward pass;
// numeric gradients from (f(p+eps) - f(p-eps)) / (2 eps) per coordinate.
// Per-coordinate relative error uses max(|analytic|, |numeric|, floor) as
// the denominator so jointly-zero coordinates report zero error.
template <typename T, typename F>
fd_report finite_diff_check(F && f, const named_tensors<T> & params, T eps, double rel_floor = 1e-8) {
    if (!(eps > T(0))) throw error(errc::argument, "finite_diff_check: eps must be positive");

    std::map<std::string, tensor<T>> analytic;
    {
        tape<T> t;
        auto loss = f(t, params);
        analytic = t.gradients(loss);
    }

    auto eval = [&](const named_tensors<T> & p) -> double {
        tape<T> t(false);
        auto loss = f(t, p);
        return (double) t.value(loss).item();
    };

    fd_report rep;
    named_tensors<T> work = params;
    for (size_t pi = 0; pi < work.size(); pi++) {
        const std::string & name = work[pi].first;
        tensor<T> & w = work[pi].second;
        auto it = analytic.find(name);
        const tensor<T> * ga = it == analytic.end() ? nullptr : &it->second;
        for (int64_t i = 0; i < w.numel(); i++) {
            const T orig = w.at(i);
            w.at(i) = orig + eps;
            const double fplus = eval(work);
            w.at(i) = orig - eps;
            const double fminus = eval(work);
            w.at(i) = orig;

            const double num = (fplus - fminus) / (2.0 * (double) eps);
            const double ana = ga ? (double) ga->at(i) : 0.0;
            const double denom = std::max({std::abs(ana), std::abs(num), rel_floor});
            const double rel = (ana == num) ? 0.0 : std::abs(ana - num) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name;
                rep.worst_index = i;
                rep.worst_analytic = ana;
                rep.worst_numeric = num;
            }
        }
    }
    return rep;
}

} // namespace ptlab
