#include "specmon.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace ptlab {

std::vector<double> sym_eigenvalues(tensor<double> a) {
    a.require_rank(2);
    if (a.shape[0] != a.shape[1]) throw_dim("sym_eigenvalues: matrix is not square");
    const int64_t n = a.shape[0];
    a.check_finite("sym_eigenvalues");

    auto off_norm = [&]() {
        double s = 0.0;
        for (int64_t p = 0; p < n; p++) {
            for (int64_t q = p + 1; q < n; q++) s += a.at(p, q) * a.at(p, q);
        }
        return std::sqrt(2.0 * s);
    };
    double scale = 0.0;
    for (double v : a.data) scale = std::max(scale, std::abs(v));
    const double tol = std::max(1e-300, 1e-14 * std::max(scale, 1.0));

    for (int sweep = 0; sweep < 100; sweep++) {
        if (off_norm() <= tol * (double) n) break;
        if (sweep == 99) throw error(errc::numeric, "sym_eigenvalues: Jacobi iteration failed to converge");
        for (int64_t p = 0; p < n; p++) {
            for (int64_t q = p + 1; q < n; q++) {
                const double apq = a.at(p, q);
                if (std::abs(apq) <= tol * 1e-4) continue;
                const double app = a.at(p, p), aqq = a.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int64_t k = 0; k < n; k++) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int64_t k = 0; k < n; k++) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }

    std::vector<double> eigs((size_t) n);
    for (int64_t i = 0; i < n; i++) eigs[(size_t) i] = a.at(i, i);
    std::sort(eigs.begin(), eigs.end());
    return eigs;
}

std::vector<double> esd(const tensor<double> & w) {
    w.require_rank(2);
    w.check_finite("esd");
    const int64_t r = w.shape[0], c = w.shape[1];
    const int64_t n = std::min(r, c);
    tensor<double> gram({n, n});
    if (c <= r) {
        for (int64_t i = 0; i < c; i++) {
            for (int64_t j = i; j < c; j++) {
                double s = 0.0;
                for (int64_t k = 0; k < r; k++) s += w.at(k, i) * w.at(k, j);
                gram.at(i, j) = s;
                gram.at(j, i) = s;
            }
        }
    } else {
        for (int64_t i = 0; i < r; i++) {
            for (int64_t j = i; j < r; j++) {
                double s = 0.0;
                for (int64_t k = 0; k < c; k++) s += w.at(i, k) * w.at(j, k);
                gram.at(i, j) = s;
                gram.at(j, i) = s;
            }
        }
    }
    std::vector<double> eigs = sym_eigenvalues(std::move(gram));
    for (double & v : eigs) v = std::max(v, 0.0); // gram eigenvalues cannot be negative
    return eigs;
}

namespace {

std::vector<double> positive_sorted(const std::vector<double> & eigs) {
    std::vector<double> xs;
    xs.reserve(eigs.size());
    for (double v : eigs) {
        if (!std::isfinite(v)) throw error(errc::numeric, "power-law fit: non-finite eigenvalue");
        if (v > 0.0) xs.push_back(v);
    }
    std::sort(xs.begin(), xs.end());
    return xs;
}

// Hill estimate and KS distance for the tail xs[first..end)
pl_fit fit_tail(const std::vector<double> & xs, size_t first) {
    const double xmin = xs[first];
    const size_t m = xs.size() - first;
    double lsum = 0.0;
    for (size_t i = first; i < xs.size(); i++) lsum += std::log(xs[i] / xmin);
    if (!(lsum > 0.0)) throw error(errc::numeric, "power-law fit undefined: degenerate tail");
    pl_fit fit;
    fit.xmin = xmin;
    fit.n_tail = (int64_t) m;
    fit.alpha = 1.0 + (double) m / lsum;
    double d = 0.0;
    for (size_t i = first; i < xs.size(); i++) {
        const double ffit = 1.0 - std::pow(xmin / xs[i], fit.alpha - 1.0);
        const double lo = (double) (i - first) / (double) m;
        const double hi = (double) (i - first + 1) / (double) m;
        d = std::max({d, std::abs(ffit - lo), std::abs(ffit - hi)});
    }
    fit.ks = d;
    return fit;
}

size_t distinct_from(const std::vector<double> & xs, size_t first) {
    size_t distinct = 0;
    for (size_t i = first; i < xs.size(); i++) {
        if (i == first || xs[i] != xs[i - 1]) distinct++;
    }
    return distinct;
}

} // namespace

pl_fit fit_power_law_fixed(const std::vector<double> & eigs, double xmin) {
    if (!(xmin > 0.0)) throw error(errc::argument, "power-law fit: xmin must be positive");
    const std::vector<double> xs = positive_sorted(eigs);
    const size_t first = (size_t) (std::lower_bound(xs.begin(), xs.end(), xmin) - xs.begin());
    if (xs.size() - first < 2) {
        throw error(errc::numeric, "power-law fit undefined: fewer than 2 samples above cutoff");
    }
    pl_fit fit = fit_tail(xs, first);
    fit.xmin = xmin; // keep the caller's cutoff, not the smallest tail sample
    return fit;
}

pl_fit fit_power_law(const std::vector<double> & eigs) {
    const std::vector<double> xs = positive_sorted(eigs);
    const size_t n = xs.size();

    bool found = false;
    pl_fit best;
    // cutoff candidates are the distinct values in the upper half of the
    // sorted spectrum; each tail holds every sample at or above its cutoff
    for (size_t i = n / 2; i < n; i++) {
        if (i > n / 2 && xs[i] == xs[i - 1]) continue;
        size_t first = i;
        while (first > 0 && xs[first - 1] == xs[i]) first--;
        if (distinct_from(xs, first) < 10) break; // tails only shrink from here
        const pl_fit fit = fit_tail(xs, first);
        if (!found || fit.ks < best.ks - 1e-15 ||
            (std::abs(fit.ks - best.ks) <= 1e-15 && fit.xmin < best.xmin)) {
            best = fit;
            found = true;
        }
    }
    if (!found) {
        throw error(errc::numeric, "power-law fit undefined: no cutoff leaves 10 distinct eigenvalues");
    }
    return best;
}

std::vector<layer_report> spectral_report(const param_set<float> & params) {
    std::vector<layer_report> out;
    for (const auto & [name, w] : params.tensors) {
        if (w.rank() != 2) continue;
        layer_report rep;
        rep.name = name;
        const int64_t min_dim = std::min(w.shape[0], w.shape[1]);
        if (min_dim < 10) {
            rep.status = layer_report::fit_status::skipped;
            rep.note = "matrix side " + std::to_string(min_dim) + " too small for a spectral fit";
            out.push_back(std::move(rep));
            continue;
        }
        const std::vector<double> eigs = esd(w.cast<double>());
        rep.n_eigs = (int64_t) eigs.size();
        rep.spectral_norm = eigs.empty() ? 0.0 : eigs.back();
        try {
            rep.fit = fit_power_law(eigs);
            rep.status = layer_report::fit_status::ok;
            rep.healthy = alpha_healthy(rep.fit.alpha);
        } catch (const error & e) {
            if (e.kind != errc::numeric) throw;
            rep.status = layer_report::fit_status::undefined;
            rep.note = e.what();
        }
        out.push_back(std::move(rep));
    }
    return out;
}

std::string layer_report_json(const layer_report & r) {
    nlohmann::json j;
    j["layer"] = r.name;
    j["n_eigs"] = r.n_eigs;
    j["spectral_norm"] = r.spectral_norm;
    switch (r.status) {
        case layer_report::fit_status::ok:
            j["status"] = "ok";
            j["alpha"] = r.fit.alpha;
            j["xmin"] = r.fit.xmin;
            j["ks"] = r.fit.ks;
            j["n_tail"] = r.fit.n_tail;
            j["healthy"] = r.healthy;
            break;
        case layer_report::fit_status::undefined:
            j["status"] = "undefined";
            j["note"] = r.note;
            break;
        case layer_report::fit_status::skipped:
            j["status"] = "skipped";
            j["note"] = r.note;
            break;
    }
    return j.dump();
}

} // namespace ptlab
