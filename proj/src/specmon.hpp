#pragma once

#include "model.hpp"

#include <string>
#include <vector>

namespace ptlab {

// eigenvalues of the weight matrix's gram matrix, ascending; computed on the
// smaller side so the count equals min(rows, cols)
std::vector<double> esd(const tensor<double> & w);

// eigenvalues of a symmetric matrix via cyclic Jacobi rotations, ascending
std::vector<double> sym_eigenvalues(tensor<double> a);

struct pl_fit {
    double  alpha  = 0.0;
    double  xmin   = 0.0;
    double  ks     = 0.0;  // Kolmogorov-Smirnov distance of the fitted tail
    int64_t n_tail = 0;
};

// Hill estimator with a KS-minimizing cutoff searched over the upper half of
// the spectrum; candidates keeping fewer than 10 distinct tail values are not
// considered. A spectrum that supports no candidate is a fit-undefined error.
pl_fit fit_power_law(const std::vector<double> & eigs);

// same estimator with the cutoff pinned by the caller
pl_fit fit_power_law_fixed(const std::vector<double> & eigs, double xmin);

inline constexpr double ALPHA_HEALTHY_MIN = 2.0;
inline constexpr double ALPHA_HEALTHY_MAX = 6.0;

inline bool alpha_healthy(double alpha) {
    return alpha >= ALPHA_HEALTHY_MIN && alpha <= ALPHA_HEALTHY_MAX;
}

struct layer_report {
    enum class fit_status { ok, undefined, skipped };

    std::string name;
    fit_status  status = fit_status::skipped;
    pl_fit      fit;
    int64_t     n_eigs        = 0;
    double      spectral_norm = 0.0;
    bool        healthy       = false;
    std::string note;
};

// per-matrix spectral health of every rank-2 tensor; matrices with a side
// shorter than 10 are reported as skipped
std::vector<layer_report> spectral_report(const param_set<float> & params);

std::string layer_report_json(const layer_report & r);

} // namespace ptlab
