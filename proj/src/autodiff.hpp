#pragma once

#include "tensor.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace ptlab {

// Reverse-mode tape. Primitives record their backward closure as they run;
// backward() replays the record once, in reverse. A tape belongs to exactly
// one training step; values stay immutable once recorded.
//
// Every primitive validates its output for NaN/Inf and fails fast instead of
// letting poison propagate.
template <typename T>
class tape {
  public:
    using vid = int32_t;

    tape() = default;

    // a value-only tape skips closure recording; backward yields zero gradients
    explicit tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}

    vid input(tensor<T> v) {
        v.check_finite("input");
        return push(std::move(v), false, nullptr);
    }

    vid param(const std::string & name, tensor<T> v) {
        v.check_finite(name.c_str());
        vid id = push(std::move(v), grad_enabled_, nullptr);
        params_.emplace_back(name, id);
        return id;
    }

    const tensor<T> & value(vid id) const { return nodes_[(size_t) id].value; }

    bool requires_grad(vid id) const { return nodes_[(size_t) id].requires_grad; }

    // valid after backward(); zero tensor for nodes the loss never touched
    const tensor<T> & grad(vid id) {
        ensure_grad(id);
        return grads_[(size_t) id];
    }

    // ---- elementwise ----

    vid add(vid a, vid b) {
        tensor<T> out = value(a);
        out.add_(value(b));
        return record("add", std::move(out), {a, b}, [a, b](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            t.accum(a, g);
            t.accum(b, g);
        });
    }

    vid sub(vid a, vid b) {
        const tensor<T> & tb = value(b);
        tensor<T> out = value(a);
        if (!out.same_shape(tb)) throw_dim("sub: shape mismatch " + shape_str(out.shape) + " vs " + shape_str(tb.shape));
        for (size_t i = 0; i < out.data.size(); i++) out.data[i] -= tb.data[i];
        return record("sub", std::move(out), {a, b}, [a, b](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            t.accum(a, g);
            tensor<T> ng = g;
            ng.scale_(T(-1));
            t.accum(b, ng);
        });
    }

    vid mul(vid a, vid b) {
        const tensor<T> & ta = value(a);
        const tensor<T> & tb = value(b);
        if (!ta.same_shape(tb)) throw_dim("mul: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
        tensor<T> out(ta.shape);
        for (size_t i = 0; i < out.data.size(); i++) out.data[i] = ta.data[i] * tb.data[i];
        return record("mul", std::move(out), {a, b}, [a, b](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            if (t.requires_grad(a)) {
                tensor<T> ga(g.shape);
                const tensor<T> & tb2 = t.value(b);
                for (size_t i = 0; i < ga.data.size(); i++) ga.data[i] = g.data[i] * tb2.data[i];
                t.accum(a, ga);
            }
            if (t.requires_grad(b)) {
                tensor<T> gb(g.shape);
                const tensor<T> & ta2 = t.value(a);
                for (size_t i = 0; i < gb.data.size(); i++) gb.data[i] = g.data[i] * ta2.data[i];
                t.accum(b, gb);
            }
        });
    }

    vid neg(vid a) { return scale(a, T(-1)); }

    vid scale(vid a, T c) {
        tensor<T> out = value(a);
        out.scale_(c);
        return record("scale", std::move(out), {a}, [a, c](tape & t, vid self) {
            tensor<T> g = t.grads_[(size_t) self];
            g.scale_(c);
            t.accum(a, g);
        });
    }

    vid silu(vid a) {
        const tensor<T> & x = value(a);
        tensor<T> out(x.shape);
        for (size_t i = 0; i < out.data.size(); i++) {
            const T z = x.data[i];
            out.data[i] = z * sigmoid(z);
        }
        return record("silu", std::move(out), {a}, [a](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            const tensor<T> & x2 = t.value(a);
            tensor<T> gx(x2.shape);
            for (size_t i = 0; i < gx.data.size(); i++) {
                const T z = x2.data[i];
                const T s = sigmoid(z);
                gx.data[i] = g.data[i] * s * (T(1) + z * (T(1) - s));
            }
            t.accum(a, gx);
        });
    }

    vid relu(vid a) {
        const tensor<T> & x = value(a);
        tensor<T> out(x.shape);
        for (size_t i = 0; i < out.data.size(); i++) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
        return record("relu", std::move(out), {a}, [a](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            const tensor<T> & x2 = t.value(a);
            tensor<T> gx(x2.shape);
            for (size_t i = 0; i < gx.data.size(); i++) gx.data[i] = x2.data[i] > T(0) ? g.data[i] : T(0);
            t.accum(a, gx);
        });
    }

    vid softplus(vid a) {
        const tensor<T> & x = value(a);
        tensor<T> out(x.shape);
        for (size_t i = 0; i < out.data.size(); i++) out.data[i] = softplus_scalar(x.data[i]);
        return record("softplus", std::move(out), {a}, [a](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            const tensor<T> & x2 = t.value(a);
            tensor<T> gx(x2.shape);
            for (size_t i = 0; i < gx.data.size(); i++) gx.data[i] = g.data[i] * sigmoid(x2.data[i]);
            t.accum(a, gx);
        });
    }

    vid sum(vid a) {
        const tensor<T> & x = value(a);
        T acc = 0;
        for (T v : x.data) acc += v;
        return record("sum", tensor<T>::scalar(acc), {a}, [a](tape & t, vid self) {
            const T g = t.grads_[(size_t) self].data[0];
            tensor<T> gx(t.value(a).shape);
            for (T & v : gx.data) v = g;
            t.accum(a, gx);
        });
    }

    // ---- linear algebra ----

    vid matmul(vid a, vid b) {
        tensor<T> out = matmul_val(value(a), value(b));
        return record("matmul", std::move(out), {a, b}, [a, b](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            if (t.requires_grad(a)) t.accum(a, matmul_bt_val(g, t.value(b)));
            if (t.requires_grad(b)) t.accum(b, matmul_at_val(t.value(a), g));
        });
    }

    // ---- row-wise softmax family ----

    vid softmax_rows(vid a) {
        tensor<T> out = softmax_rows_val(value(a));
        return record("softmax_rows", std::move(out), {a}, [a](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            const tensor<T> & y = t.value(self);
            const int64_t r = y.shape[0], c = y.shape[1];
            tensor<T> gx({r, c});
            for (int64_t i = 0; i < r; i++) {
                T dot = 0;
                for (int64_t j = 0; j < c; j++) dot += g.at(i, j) * y.at(i, j);
                for (int64_t j = 0; j < c; j++) gx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
            }
            t.accum(a, gx);
        });
    }

    vid log_softmax_rows(vid a) {
        const tensor<T> & x = value(a);
        x.require_rank(2);
        if (x.shape[1] < 1) throw_dim("log_softmax_rows: empty row dimension");
        const int64_t r = x.shape[0], c = x.shape[1];
        tensor<T> out({r, c});
        for (int64_t i = 0; i < r; i++) {
            T mx = x.at(i, 0);
            for (int64_t j = 1; j < c; j++) mx = std::max(mx, x.at(i, j));
            T sum = 0;
            for (int64_t j = 0; j < c; j++) sum += std::exp(x.at(i, j) - mx);
            const T lse = mx + std::log(sum);
            for (int64_t j = 0; j < c; j++) out.at(i, j) = x.at(i, j) - lse;
        }
        return record("log_softmax_rows", std::move(out), {a}, [a](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            const tensor<T> & y = t.value(self);
            const int64_t r = y.shape[0], c = y.shape[1];
            tensor<T> gx({r, c});
            for (int64_t i = 0; i < r; i++) {
                T gsum = 0;
                for (int64_t j = 0; j < c; j++) gsum += g.at(i, j);
                for (int64_t j = 0; j < c; j++) gx.at(i, j) = g.at(i, j) - std::exp(y.at(i, j)) * gsum;
            }
            t.accum(a, gx);
        });
    }

    // ---- model primitives ----

    // y = gain * x / sqrt(mean(x^2) + eps), rows of x normalized independently
    vid rmsnorm(vid xv, vid gainv, T eps) {
        const tensor<T> & x = value(xv);
        const tensor<T> & gain = value(gainv);
        x.require_rank(2);
        gain.require_rank(1);
        if (x.shape[1] != gain.shape[0]) {
            throw_dim("rmsnorm: width " + std::to_string(x.shape[1]) + " does not match gain length " +
                      std::to_string(gain.shape[0]));
        }
        const int64_t r = x.shape[0], c = x.shape[1];
        tensor<T> out({r, c});
        for (int64_t i = 0; i < r; i++) {
            T ss = 0;
            for (int64_t j = 0; j < c; j++) ss += x.at(i, j) * x.at(i, j);
            const T rinv = T(1) / std::sqrt(ss / (T) c + eps);
            for (int64_t j = 0; j < c; j++) out.at(i, j) = gain.at(j) * x.at(i, j) * rinv;
        }
        return record("rmsnorm", std::move(out), {xv, gainv}, [xv, gainv, eps](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            const tensor<T> & x2 = t.value(xv);
            const tensor<T> & gn = t.value(gainv);
            const int64_t r = x2.shape[0], c = x2.shape[1];
            tensor<T> gx({r, c});
            tensor<T> ggain({c});
            for (int64_t i = 0; i < r; i++) {
                T ss = 0;
                for (int64_t j = 0; j < c; j++) ss += x2.at(i, j) * x2.at(i, j);
                const T rinv = T(1) / std::sqrt(ss / (T) c + eps);
                const T r3 = rinv * rinv * rinv / (T) c;
                T dot = 0;
                for (int64_t j = 0; j < c; j++) dot += g.at(i, j) * gn.at(j) * x2.at(i, j);
                for (int64_t j = 0; j < c; j++) {
                    gx.at(i, j) = g.at(i, j) * gn.at(j) * rinv - x2.at(i, j) * r3 * dot;
                    ggain.at(j) += g.at(i, j) * x2.at(i, j) * rinv;
                }
            }
            t.accum(xv, gx);
            if (t.requires_grad(gainv)) t.accum(gainv, ggain);
        });
    }

    // rotate consecutive coordinate pairs of each head by pos * theta^(-2p/head_size)
    vid rope(vid xv, std::vector<int> positions, T theta, int head_size) {
        const tensor<T> & x = value(xv);
        x.require_rank(2);
        if (head_size % 2 != 0) throw_config("rope: head size must be even, got " + std::to_string(head_size));
        if (x.shape[1] % head_size != 0) {
            throw_dim("rope: width " + std::to_string(x.shape[1]) + " is not a multiple of head size " +
                      std::to_string(head_size));
        }
        if ((int64_t) positions.size() != x.shape[0]) {
            throw_dim("rope: positions length " + std::to_string(positions.size()) + " does not match rows " +
                      std::to_string(x.shape[0]));
        }
        tensor<T> out = rope_apply_dir(x, positions, theta, head_size, false);
        return record("rope", std::move(out), {xv},
                      [xv, positions = std::move(positions), theta, head_size](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            t.accum(xv, rope_apply_dir(g, positions, theta, head_size, true));
        });
    }

    // causal, segment-isolated scaled dot-product attention with grouped kv heads
    vid attention_gqa(vid qv, vid kv, vid vv, std::vector<int32_t> segments,
                      int n_heads, int n_kv_heads, int head_size) {
        const tensor<T> & q = value(qv);
        const tensor<T> & k = value(kv);
        const tensor<T> & v = value(vv);
        q.require_rank(2);
        k.require_rank(2);
        v.require_rank(2);
        const int64_t len = q.shape[0];
        if (n_kv_heads <= 0 || n_heads % n_kv_heads != 0) {
            throw_config("attention: query heads " + std::to_string(n_heads) +
                         " not divisible by kv heads " + std::to_string(n_kv_heads));
        }
        if (q.shape[1] != (int64_t) n_heads * head_size ||
            k.shape[1] != (int64_t) n_kv_heads * head_size ||
            v.shape[1] != (int64_t) n_kv_heads * head_size ||
            k.shape[0] != len || v.shape[0] != len) {
            throw_dim("attention: inconsistent q/k/v shapes " + shape_str(q.shape) + ", " +
                      shape_str(k.shape) + ", " + shape_str(v.shape));
        }
        if (segments.empty()) segments.assign((size_t) len, 0);
        if ((int64_t) segments.size() != len) {
            throw_dim("attention: segment mask length " + std::to_string(segments.size()) +
                      " does not match sequence length " + std::to_string(len));
        }

        const int group = n_heads / n_kv_heads;
        const T inv_scale = T(1) / std::sqrt((T) head_size);

        // probs[h] is a dense len x len matrix, zero where masked out
        auto probs = std::make_shared<std::vector<tensor<T>>>();
        probs->reserve((size_t) n_heads);
        tensor<T> out({len, (int64_t) n_heads * head_size});

        std::vector<T> scores((size_t) len);
        for (int h = 0; h < n_heads; h++) {
            const int kvh = h / group;
            tensor<T> p({len, len});
            for (int64_t i = 0; i < len; i++) {
                T mx = -std::numeric_limits<T>::infinity();
                for (int64_t j = 0; j <= i; j++) {
                    if (segments[(size_t) j] != segments[(size_t) i]) continue;
                    const T * qi = q.data.data() + i * q.shape[1] + (int64_t) h * head_size;
                    const T * kj = k.data.data() + j * k.shape[1] + (int64_t) kvh * head_size;
                    T s = 0;
                    for (int d = 0; d < head_size; d++) s += qi[d] * kj[d];
                    s *= inv_scale;
                    scores[(size_t) j] = s;
                    mx = std::max(mx, s);
                }
                T denom = 0;
                for (int64_t j = 0; j <= i; j++) {
                    if (segments[(size_t) j] != segments[(size_t) i]) continue;
                    denom += std::exp(scores[(size_t) j] - mx);
                }
                T * oi = out.data.data() + i * out.shape[1] + (int64_t) h * head_size;
                for (int64_t j = 0; j <= i; j++) {
                    if (segments[(size_t) j] != segments[(size_t) i]) continue;
                    const T pij = std::exp(scores[(size_t) j] - mx) / denom;
                    p.at(i, j) = pij;
                    const T * vj = v.data.data() + j * v.shape[1] + (int64_t) kvh * head_size;
                    for (int d = 0; d < head_size; d++) oi[d] += pij * vj[d];
                }
            }
            probs->push_back(std::move(p));
        }

        return record("attention_gqa", std::move(out), {qv, kv, vv},
                      [qv, kv, vv, segments = std::move(segments), probs,
                       n_heads, n_kv_heads, head_size](tape & t, vid self) {
            const tensor<T> & g = t.grads_[(size_t) self];
            const tensor<T> & q2 = t.value(qv);
            const tensor<T> & k2 = t.value(kv);
            const tensor<T> & v2 = t.value(vv);
            const int64_t len = q2.shape[0];
            const int group = n_heads / n_kv_heads;
            const T inv_scale = T(1) / std::sqrt((T) head_size);
            tensor<T> gq(q2.shape);
            tensor<T> gk(k2.shape);
            tensor<T> gv(v2.shape);
            std::vector<T> dp((size_t) len);
            for (int h = 0; h < n_heads; h++) {
                const int kvh = h / group;
                const tensor<T> & p = (*probs)[(size_t) h];
                for (int64_t i = 0; i < len; i++) {
                    const T * gi = g.data.data() + i * g.shape[1] + (int64_t) h * head_size;
                    T dot = 0;
                    for (int64_t j = 0; j <= i; j++) {
                        const T pij = p.at(i, j);
                        if (pij == T(0)) { dp[(size_t) j] = 0; continue; }
                        const T * vj = v2.data.data() + j * v2.shape[1] + (int64_t) kvh * head_size;
                        T d = 0;
                        for (int dd = 0; dd < head_size; dd++) d += gi[dd] * vj[dd];
                        dp[(size_t) j] = d;
                        dot += pij * d;
                    }
                    for (int64_t j = 0; j <= i; j++) {
                        const T pij = p.at(i, j);
                        if (pij == T(0)) continue;
                        const T ds = pij * (dp[(size_t) j] - dot) * inv_scale;
                        const T * qi = q2.data.data() + i * q2.shape[1] + (int64_t) h * head_size;
                        const T * kj = k2.data.data() + j * k2.shape[1] + (int64_t) kvh * head_size;
                        T * gqi = gq.data.data() + i * gq.shape[1] + (int64_t) h * head_size;
                        T * gkj = gk.data.data() + j * gk.shape[1] + (int64_t) kvh * head_size;
                        T * gvj = gv.data.data() + j * gv.shape[1] + (int64_t) kvh * head_size;
                        for (int dd = 0; dd < head_size; dd++) {
                            gqi[dd] += ds * kj[dd];
                            gkj[dd] += ds * qi[dd];
                            gvj[dd] += pij * gi[dd];
                        }
                    }
                }
            }
            t.accum(qv, gq);
            if (t.requires_grad(kv)) t.accum(kv, gk);
            if (t.requires_grad(vv)) t.accum(vv, gv);
        });
    }

    // row gather from an embedding table
    vid embed(vid tablev, std::vector<int32_t> tokens) {
        const tensor<T> & table = value(tablev);
        table.require_rank(2);
        const int64_t vocab = table.shape[0], dim = table.shape[1];
        tensor<T> out({(int64_t) tokens.size(), dim});
        for (size_t i = 0; i < tokens.size(); i++) {
            const int32_t tok = tokens[i];
            if (tok < 0 || tok >= vocab) {
                throw error(errc::argument, "token id " + std::to_string(tok) + " out of range for vocab " +
                            std::to_string(vocab));
            }
            for (int64_t j = 0; j < dim; j++) out.at((int64_t) i, j) = table.at(tok, j);
        }
        return record("embed", std::move(out), {tablev}, [tablev, tokens = std::move(tokens)](tape & t, vid self) {
            if (!t.requires_grad(tablev)) return;
            const tensor<T> & g = t.grads_[(size_t) self];
            tensor<T> gt(t.value(tablev).shape);
            const int64_t dim = gt.shape[1];
            for (size_t i = 0; i < tokens.size(); i++) {
                for (int64_t j = 0; j < dim; j++) gt.at(tokens[i], j) += g.at((int64_t) i, j);
            }
            t.accum(tablev, gt);
        });
    }

    // sum (or mean) over mask-true positions of -log_probs[i, target[i]];
    // masked-out positions contribute exactly zero to value and gradient
    vid masked_nll(vid lpv, std::vector<int32_t> targets, std::vector<uint8_t> mask, bool mean) {
        const tensor<T> & lp = value(lpv);
        lp.require_rank(2);
        const int64_t len = lp.shape[0], vocab = lp.shape[1];
        if ((int64_t) targets.size() != len || (int64_t) mask.size() != len) {
            throw_dim("masked_nll: targets/mask length does not match " + std::to_string(len) + " rows");
        }
        int64_t count = 0;
        T acc = 0;
        for (int64_t i = 0; i < len; i++) {
            if (!mask[(size_t) i]) continue;
            const int32_t tgt = targets[(size_t) i];
            if (tgt < 0 || tgt >= vocab) {
                throw error(errc::argument, "masked_nll: target " + std::to_string(tgt) + " out of vocab range");
            }
            acc -= lp.at(i, tgt);
            count++;
        }
        if (count == 0) throw error(errc::argument, "masked_nll: empty supervision (no mask-true positions)");
        if (mean) acc /= (T) count;
        return record("masked_nll", tensor<T>::scalar(acc), {lpv},
                      [lpv, targets = std::move(targets), mask = std::move(mask), mean, count](tape & t, vid self) {
            const T g = t.grads_[(size_t) self].data[0];
            const T coef = mean ? g / (T) count : g;
            tensor<T> glp(t.value(lpv).shape);
            for (size_t i = 0; i < mask.size(); i++) {
                if (mask[i]) glp.at((int64_t) i, targets[i]) -= coef;
            }
            t.accum(lpv, glp);
        });
    }

    // ---- backward ----

    void backward(vid loss) {
        if (value(loss).numel() != 1) {
            throw error(errc::argument, "backward: loss must be scalar, got " + shape_str(value(loss).shape));
        }
        grads_.assign(nodes_.size(), tensor<T>());
        touched_.assign(nodes_.size(), false);
        accum(loss, tensor<T>::scalar(T(1)));
        for (int64_t i = (int64_t) loss; i >= 0; i--) {
            if (!touched_[(size_t) i]) continue;
            if (nodes_[(size_t) i].back) nodes_[(size_t) i].back(*this, (vid) i);
        }
    }

    // parameter name -> accumulated gradient; exact zeros for unused parameters
    std::map<std::string, tensor<T>> gradients(vid loss) {
        backward(loss);
        std::map<std::string, tensor<T>> out;
        for (auto & [name, id] : params_) {
            ensure_grad(id);
            out[name] = grads_[(size_t) id];
        }
        return out;
    }

    size_t size() const { return nodes_.size(); }

  private:
    struct node {
        tensor<T> value;
        bool requires_grad = false;
        std::function<void(tape &, vid)> back;
    };

    static T sigmoid(T z) {
        if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
        const T e = std::exp(z);
        return e / (T(1) + e);
    }

    static T softplus_scalar(T z) {
        // log(1 + e^z), stable for large |z|
        if (z > T(30)) return z + std::log1p(std::exp(-z));
        return std::log1p(std::exp(z));
    }

    static tensor<T> rope_apply_dir(const tensor<T> & x, const std::vector<int> & positions,
                                    T theta, int head_size, bool inverse) {
        const int64_t len = x.shape[0], width = x.shape[1];
        const int64_t n_heads = width / head_size;
        const int pairs = head_size / 2;
        tensor<T> out({len, width});
        for (int64_t i = 0; i < len; i++) {
            for (int p = 0; p < pairs; p++) {
                const T freq = std::pow(theta, -T(2 * p) / (T) head_size);
                T angle = (T) positions[(size_t) i] * freq;
                if (inverse) angle = -angle;
                const T c = std::cos(angle), s = std::sin(angle);
                for (int64_t h = 0; h < n_heads; h++) {
                    const int64_t base = i * width + h * head_size + 2 * p;
                    const T x0 = x.data[(size_t) base], x1 = x.data[(size_t) base + 1];
                    out.data[(size_t) base]     = x0 * c - x1 * s;
                    out.data[(size_t) base + 1] = x0 * s + x1 * c;
                }
            }
        }
        return out;
    }

    vid push(tensor<T> v, bool needs_grad, std::function<void(tape &, vid)> back) {
        nodes_.push_back(node{std::move(v), needs_grad, std::move(back)});
        return (vid) (nodes_.size() - 1);
    }

    vid record(const char * opname, tensor<T> out, std::initializer_list<vid> ins,
               std::function<void(tape &, vid)> back) {
        out.check_finite(opname);
        bool needs_grad = false;
        if (grad_enabled_) {
            for (vid i : ins) needs_grad = needs_grad || nodes_[(size_t) i].requires_grad;
        }
        return push(std::move(out), needs_grad, needs_grad ? std::move(back) : nullptr);
    }

    void ensure_grad(vid id) {
        if (grads_.size() != nodes_.size()) grads_.resize(nodes_.size());
        if (touched_.size() != nodes_.size()) touched_.resize(nodes_.size(), false);
        if (grads_[(size_t) id].data.empty()) grads_[(size_t) id] = tensor<T>(nodes_[(size_t) id].value.shape);
    }

    // constants absorb no gradient
    void accum(vid id, const tensor<T> & g) {
        if (!nodes_[(size_t) id].requires_grad) return;
        ensure_grad(id);
        grads_[(size_t) id].add_(g);
        touched_[(size_t) id] = true;
    }

    bool grad_enabled_ = true;
    std::vector<node> nodes_;
    std::vector<tensor<T>> grads_;
    std::vector<bool> touched_;
    std::vector<std::pair<std::string, vid>> params_;
};

} // namespace ptlab
