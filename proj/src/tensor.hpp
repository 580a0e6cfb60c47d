#pragma once

#include "error.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace ptlab {

using shape_t = std::vector<int64_t>;

inline int64_t numel_of(const shape_t & shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw_dim("tensor extent must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

inline std::string shape_str(const shape_t & shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); i++) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. Value semantics throughout; the scalar type selects
// the precision grade (float for training, double for verification).
template <typename T>
struct tensor {
    shape_t shape;
    std::vector<T> data;

    tensor() = default;

    explicit tensor(shape_t s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}

    tensor(shape_t s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if ((int64_t) data.size() != numel_of(shape)) {
            throw_dim("tensor data size " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
        }
    }

    static tensor scalar(T v) { return tensor({1}, {v}); }

    int64_t numel() const { return (int64_t) data.size(); }
    int     rank() const { return (int) shape.size(); }

    int64_t rows() const { require_rank(2); return shape[0]; }
    int64_t cols() const { require_rank(2); return shape[1]; }

    void require_rank(int r) const {
        if (rank() != r) throw_dim("expected rank-" + std::to_string(r) + " tensor, got " + shape_str(shape));
    }

    T & at(int64_t i)            { return data[(size_t) i]; }
    T   at(int64_t i) const      { return data[(size_t) i]; }
    T & at(int64_t r, int64_t c)       { return data[(size_t) (r * shape[1] + c)]; }
    T   at(int64_t r, int64_t c) const { return data[(size_t) (r * shape[1] + c)]; }

    T item() const {
        if (numel() != 1) throw_dim("item() on non-scalar tensor " + shape_str(shape));
        return data[0];
    }

    bool same_shape(const tensor & o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite((double) v)) return false;
        }
        return true;
    }

    void check_finite(const char * op) const {
        if (!all_finite()) throw_numeric(std::string("non-finite value produced by ") + op);
    }

    tensor & add_(const tensor & o) {
        if (!same_shape(o)) throw_dim("add: shape mismatch " + shape_str(shape) + " vs " + shape_str(o.shape));
        for (size_t i = 0; i < data.size(); i++) data[i] += o.data[i];
        return *this;
    }

    tensor & scale_(T c) {
        for (T & v : data) v *= c;
        return *this;
    }

    template <typename U>
    tensor<U> cast() const {
        tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); i++) out.data[i] = (U) data[i];
        return out;
    }
};

// c = a * b, standard row-major matrix product
template <typename T>
tensor<T> matmul_val(const tensor<T> & a, const tensor<T> & b) {
    a.require_rank(2);
    b.require_rank(2);
    if (a.shape[1] != b.shape[0]) {
        throw_dim("matmul: inner extents do not match: " + shape_str(a.shape) + " * " + shape_str(b.shape));
    }
    const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    tensor<T> c({m, n});
    const T * pa = a.data.data();
    const T * pb = b.data.data();
    T       * pc = c.data.data();
    for (int64_t i = 0; i < m; i++) {
        for (int64_t l = 0; l < k; l++) {
            const T av = pa[i * k + l];
            if (av == T(0)) continue;
            const T * brow = pb + l * n;
            T * crow = pc + i * n;
            for (int64_t j = 0; j < n; j++) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

// c = a * b^T
template <typename T>
tensor<T> matmul_bt_val(const tensor<T> & a, const tensor<T> & b) {
    a.require_rank(2);
    b.require_rank(2);
    if (a.shape[1] != b.shape[1]) {
        throw_dim("matmul_bt: inner extents do not match: " + shape_str(a.shape) + " * " + shape_str(b.shape) + "^T");
    }
    const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    tensor<T> c({m, n});
    for (int64_t i = 0; i < m; i++) {
        for (int64_t j = 0; j < n; j++) {
            const T * ra = a.data.data() + i * k;
            const T * rb = b.data.data() + j * k;
            T acc = 0;
            for (int64_t l = 0; l < k; l++) acc += ra[l] * rb[l];
            c.data[(size_t) (i * n + j)] = acc;
        }
    }
    return c;
}

// c = a^T * b
template <typename T>
tensor<T> matmul_at_val(const tensor<T> & a, const tensor<T> & b) {
    a.require_rank(2);
    b.require_rank(2);
    if (a.shape[0] != b.shape[0]) {
        throw_dim("matmul_at: inner extents do not match: " + shape_str(a.shape) + "^T * " + shape_str(b.shape));
    }
    const int64_t m = a.shape[1], k = a.shape[0], n = b.shape[1];
    tensor<T> c({m, n});
    for (int64_t l = 0; l < k; l++) {
        const T * ra = a.data.data() + l * m;
        const T * rb = b.data.data() + l * n;
        for (int64_t i = 0; i < m; i++) {
            const T av = ra[i];
            if (av == T(0)) continue;
            T * rc = c.data.data() + i * n;
            for (int64_t j = 0; j < n; j++) rc[j] += av * rb[j];
        }
    }
    return c;
}

// rows sum to 1; max-subtracted for stability
template <typename T>
tensor<T> softmax_rows_val(const tensor<T> & x) {
    x.require_rank(2);
    if (x.shape[1] < 1 || x.shape[0] < 1) throw_dim("softmax_rows: empty dimension in " + shape_str(x.shape));
    const int64_t r = x.shape[0], c = x.shape[1];
    tensor<T> y({r, c});
    for (int64_t i = 0; i < r; i++) {
        const T * xi = x.data.data() + i * c;
        T * yi = y.data.data() + i * c;
        T mx = xi[0];
        for (int64_t j = 1; j < c; j++) mx = std::max(mx, xi[j]);
        T sum = 0;
        for (int64_t j = 0; j < c; j++) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        for (int64_t j = 0; j < c; j++) yi[j] /= sum;
    }
    return y;
}

} // namespace ptlab
