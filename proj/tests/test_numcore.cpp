#include <doctest.h>

#include "autodiff.hpp"
#include "gradcheck.hpp"
#include "rng.hpp"

#include <cmath>
#include <set>

using namespace ptlab;

using dtape = tape<double>;

TEST_CASE("tensor shape validation") {
    CHECK_NOTHROW(tensor<double>({2, 3}));
    CHECK_THROWS_AS(tensor<double>({0, 3}), error);
    CHECK_THROWS_AS(tensor<double>({2, -1}), error);
    try {
        tensor<double>({2, 0});
    } catch (const error & e) {
        CHECK(e.kind == errc::dimension);
    }
    tensor<double> t({2, 2}, {1, 2, 3, 4});
    CHECK(t.at(1, 0) == 3.0);
    CHECK_THROWS_AS(tensor<double>({2, 2}, {1.0, 2.0}), error);
}

TEST_CASE("non-finite values are rejected at graph entry") {
    dtape t;
    CHECK_THROWS_AS(t.input(tensor<double>({2}, {1.0, std::nan("")})), error);
    CHECK_THROWS_AS(t.param("p", tensor<double>({1}, {INFINITY})), error);
    try {
        t.input(tensor<double>({1}, {-INFINITY}));
    } catch (const error & e) {
        CHECK(e.kind == errc::numeric);
    }
}

TEST_CASE("matmul hand case") {
    dtape t;
    auto a = t.input(tensor<double>({2, 2}, {1, 2, 3, 4}));
    auto b = t.input(tensor<double>({2, 2}, {5, 6, 7, 8}));
    const auto c = t.value(t.matmul(a, b));
    CHECK(c.at(0, 0) == doctest::Approx(19).epsilon(1e-12));
    CHECK(c.at(0, 1) == doctest::Approx(22).epsilon(1e-12));
    CHECK(c.at(1, 0) == doctest::Approx(43).epsilon(1e-12));
    CHECK(c.at(1, 1) == doctest::Approx(50).epsilon(1e-12));

    auto bad = t.input(tensor<double>({3, 2}, {0, 0, 0, 0, 0, 0}));
    CHECK_THROWS_AS(t.matmul(a, bad), error);
}

TEST_CASE("matmul is associative within 1e-10") {
    counter_rng rng(7, 1);
    auto fill = [&](int64_t r, int64_t c) {
        tensor<double> t({r, c});
        for (auto & v : t.data) v = rng.next_normal();
        return t;
    };
    dtape t;
    auto a = t.input(fill(3, 4));
    auto b = t.input(fill(4, 5));
    auto c = t.input(fill(5, 2));
    const auto left = t.value(t.matmul(t.matmul(a, b), c));
    const auto right = t.value(t.matmul(a, t.matmul(b, c)));
    for (int64_t i = 0; i < left.numel(); i++) {
        CHECK(left.at(i) == doctest::Approx(right.at(i)).epsilon(1e-10));
    }
}

TEST_CASE("softmax rows") {
    dtape t;
    auto x = t.input(tensor<double>({1, 2}, {0.0, std::log(3.0)}));
    const auto y = t.value(t.softmax_rows(x));
    CHECK(y.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

    // rows sum to one and shifting a row leaves it unchanged
    counter_rng rng(3, 9);
    tensor<double> raw({4, 7});
    for (auto & v : raw.data) v = 3.0 * rng.next_normal();
    tensor<double> shifted = raw;
    for (int64_t i = 0; i < 4; i++) {
        for (int64_t j = 0; j < 7; j++) shifted.at(i, j) += 100.0 + (double) i;
    }
    const auto y1 = t.value(t.softmax_rows(t.input(raw)));
    const auto y2 = t.value(t.softmax_rows(t.input(shifted)));
    for (int64_t i = 0; i < 4; i++) {
        double sum = 0;
        for (int64_t j = 0; j < 7; j++) {
            sum += y1.at(i, j);
            CHECK(y1.at(i, j) == doctest::Approx(y2.at(i, j)).epsilon(1e-12));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("log_softmax matches log of softmax") {
    dtape t;
    counter_rng rng(11, 0);
    tensor<double> raw({3, 5});
    for (auto & v : raw.data) v = 2.0 * rng.next_normal();
    const auto ls = t.value(t.log_softmax_rows(t.input(raw)));
    const auto s = t.value(t.softmax_rows(t.input(raw)));
    for (int64_t i = 0; i < ls.numel(); i++) {
        CHECK(ls.at(i) == doctest::Approx(std::log(s.at(i))).epsilon(1e-10));
    }
}

TEST_CASE("silu and softplus values") {
    dtape t;
    const auto y = t.value(t.silu(t.input(tensor<double>({1}, {1.0}))));
    CHECK(y.at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));

    // stable at large magnitudes
    const auto sp = t.value(t.softplus(t.input(tensor<double>({2}, {100.0, -100.0}))));
    CHECK(sp.at(0) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(sp.at(1) == doctest::Approx(std::exp(-100.0)).epsilon(1e-6));
    CHECK(sp.at(1) > 0.0);
}

TEST_CASE("rmsnorm hand case") {
    dtape t;
    auto x = t.input(tensor<double>({1, 2}, {3.0, 4.0}));
    auto g = t.input(tensor<double>({2}, {1.0, 1.0}));
    const auto y = t.value(t.rmsnorm(x, g, 1e-12));
    CHECK(y.at(0, 0) == doctest::Approx(0.8485281374).epsilon(1e-8));
    CHECK(y.at(0, 1) == doctest::Approx(1.1313708499).epsilon(1e-8));
}

TEST_CASE("rope rotates pairs and preserves norms") {
    const int head_size = 4;
    dtape t;
    tensor<double> x({3, 8});
    counter_rng rng(5, 2);
    for (auto & v : x.data) v = rng.next_normal();

    auto out = t.rope(t.input(x), {0, 1, 5}, 1000.0, head_size);
    const auto y = t.value(out);

    // position zero is the identity
    for (int64_t j = 0; j < 8; j++) CHECK(y.at(0, j) == doctest::Approx(x.at(0, j)).epsilon(1e-12));
    // each rotated pair keeps its length
    for (int64_t i = 0; i < 3; i++) {
        for (int64_t p = 0; p < 4; p++) {
            const double n0 = x.at(i, 2 * p) * x.at(i, 2 * p) + x.at(i, 2 * p + 1) * x.at(i, 2 * p + 1);
            const double n1 = y.at(i, 2 * p) * y.at(i, 2 * p) + y.at(i, 2 * p + 1) * y.at(i, 2 * p + 1);
            CHECK(n1 == doctest::Approx(n0).epsilon(1e-10));
        }
    }
    // explicit angle for the first pair of row 1: cos(1), sin(1)
    const double c = std::cos(1.0), s = std::sin(1.0);
    CHECK(y.at(1, 0) == doctest::Approx(x.at(1, 0) * c - x.at(1, 1) * s).epsilon(1e-12));
    CHECK(y.at(1, 1) == doctest::Approx(x.at(1, 0) * s + x.at(1, 1) * c).epsilon(1e-12));

    CHECK_THROWS_AS(t.rope(t.input(x), {0, 1, 2}, 1000.0, 3), error);
}

TEST_CASE("simple gradients") {
    dtape t;
    auto p = t.param("p", tensor<double>({1}, {3.0}));
    auto loss = t.sum(t.mul(p, p));
    auto grads = t.gradients(loss);
    CHECK(grads["p"].at(0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradient accumulation is additive across terms") {
    dtape t;
    auto p = t.param("p", tensor<double>({2}, {1.5, -2.0}));
    auto loss = t.add(t.sum(t.mul(p, p)), t.sum(t.scale(p, 3.0)));
    auto grads = t.gradients(loss);
    CHECK(grads["p"].at(0) == doctest::Approx(2.0 * 1.5 + 3.0).epsilon(1e-12));
    CHECK(grads["p"].at(1) == doctest::Approx(2.0 * -2.0 + 3.0).epsilon(1e-12));
}

TEST_CASE("unused parameters get exact zero gradients") {
    dtape t;
    auto p = t.param("p", tensor<double>({1}, {3.0}));
    auto q = t.param("q", tensor<double>({2}, {1.0, 2.0}));
    (void) q;
    auto grads = t.gradients(t.sum(t.mul(p, p)));
    CHECK(grads["q"].at(0) == 0.0);
    CHECK(grads["q"].at(1) == 0.0);
}

TEST_CASE("backward needs a scalar loss") {
    dtape t;
    auto p = t.param("p", tensor<double>({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(t.mul(p, p)), error);
}

TEST_CASE("masked_nll validates and respects the mask") {
    dtape t;
    // two rows of log-probs over 2 classes; only row 0 supervised
    tensor<double> lp({2, 2}, {std::log(0.5), std::log(0.5), std::log(0.25), std::log(0.75)});
    auto lpv = t.input(lp);
    auto loss = t.masked_nll(lpv, {0, 1}, {1, 0}, true);
    CHECK(t.value(loss).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(t.masked_nll(lpv, {0, 1}, {0, 0}, true), error);   // empty supervision
    CHECK_THROWS_AS(t.masked_nll(lpv, {0, 5}, {1, 1}, true), error);   // target out of range
    CHECK_THROWS_AS(t.masked_nll(lpv, {0}, {1}, true), error);         // length mismatch
    CHECK_NOTHROW(t.masked_nll(lpv, {0, 5}, {1, 0}, true));            // masked-out target ignored
}

TEST_CASE("cross-entropy gradient matches finite differences to 1e-6") {
    counter_rng rng(13, 4);
    tensor<double> logits({2, 5});
    for (auto & v : logits.data) v = rng.next_normal();
    named_tensors<double> params{{"logits", logits}};

    auto f = [](dtape & t, const named_tensors<double> & p) {
        auto x = t.param("logits", p[0].second);
        return t.masked_nll(t.log_softmax_rows(x), {3, 1}, {1, 1}, true);
    };
    const fd_report rep = finite_diff_check<double>(f, params, 1e-6);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("finite differences on a smooth quadratic are near-exact") {
    named_tensors<double> params{{"p", tensor<double>({3}, {0.5, -1.25, 2.0})}};
    auto f = [](dtape & t, const named_tensors<double> & p) {
        auto x = t.param("p", p[0].second);
        return t.sum(t.mul(x, x));
    };
    const fd_report rep = finite_diff_check<double>(f, params, 1e-5);
    CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("finite differences expose a kink") {
    named_tensors<double> params{{"p", tensor<double>({1}, {0.0})}};
    auto f = [](dtape & t, const named_tensors<double> & p) {
        auto x = t.param("p", p[0].second);
        return t.sum(t.relu(x));
    };
    const fd_report rep = finite_diff_check<double>(f, params, 1e-5);
    CHECK(rep.max_rel_err > 0.1); // analytic 0 vs numeric 0.5
}

TEST_CASE("finite_diff_check rejects a non-positive step") {
    named_tensors<double> params{{"p", tensor<double>({1}, {1.0})}};
    auto f = [](dtape & t, const named_tensors<double> & p) {
        auto x = t.param("p", p[0].second);
        return t.sum(x);
    };
    CHECK_THROWS_AS(finite_diff_check<double>(f, params, 0.0), error);
    CHECK_THROWS_AS(finite_diff_check<double>(f, params, -1e-5), error);
}

TEST_CASE("attention is causal and segment-isolated") {
    const int hs = 4;
    counter_rng rng(21, 8);
    auto fill = [&](int64_t r, int64_t c) {
        tensor<double> t({r, c});
        for (auto & v : t.data) v = rng.next_normal();
        return t;
    };
    const tensor<double> q = fill(6, 8), k = fill(6, 4), v = fill(6, 4);

    dtape t;
    auto out1 = t.value(t.attention_gqa(t.input(q), t.input(k), t.input(v), {0, 0, 0, 1, 1, 1}, 2, 1, hs));

    // editing the second segment must not change the first segment's rows
    tensor<double> q2 = q, k2 = k, v2 = v;
    for (int64_t i = 3; i < 6; i++) {
        for (int64_t j = 0; j < 8; j++) q2.at(i, j) += 1.0;
        for (int64_t j = 0; j < 4; j++) { k2.at(i, j) -= 2.0; v2.at(i, j) += 0.5; }
    }
    auto out2 = t.value(t.attention_gqa(t.input(q2), t.input(k2), t.input(v2), {0, 0, 0, 1, 1, 1}, 2, 1, hs));
    for (int64_t i = 0; i < 3; i++) {
        for (int64_t j = 0; j < 8; j++) CHECK(out1.at(i, j) == out2.at(i, j));
    }

    // causality inside a segment: changing a later token leaves earlier rows alone
    tensor<double> q3 = q, k3 = k, v3 = v;
    for (int64_t j = 0; j < 4; j++) { k3.at(2, j) += 3.0; v3.at(2, j) -= 1.0; }
    auto out3 = t.value(t.attention_gqa(t.input(q), t.input(k3), t.input(v3), {0, 0, 0, 1, 1, 1}, 2, 1, hs));
    for (int64_t i = 0; i < 2; i++) {
        for (int64_t j = 0; j < 8; j++) CHECK(out1.at(i, j) == out3.at(i, j));
    }

    // a single token attends only to itself, so its output is its value row
    dtape t2;
    const tensor<double> q1 = fill(1, 8), k1 = fill(1, 4), v1 = fill(1, 4);
    const auto single =
        t2.value(t2.attention_gqa(t2.input(q1), t2.input(k1), t2.input(v1), {}, 2, 1, hs));
    for (int64_t j = 0; j < 8; j++) {
        CHECK(single.at(0, j) == doctest::Approx(v1.at(0, j % hs)).epsilon(1e-15));
    }
    CHECK_THROWS_AS(t.attention_gqa(t.input(q), t.input(k), t.input(v), {0, 0}, 2, 1, hs), error);
    CHECK_THROWS_AS(t.attention_gqa(t.input(q), t.input(k), t.input(v), {}, 3, 2, hs), error);
}

TEST_CASE("embed gathers rows and scatters gradients") {
    dtape t;
    auto table = t.param("emb", tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
    auto x = t.embed(table, {2, 0, 2});
    const auto y = t.value(x);
    CHECK(y.at(0, 0) == 5.0);
    CHECK(y.at(1, 1) == 2.0);
    auto grads = t.gradients(t.sum(x));
    CHECK(grads["emb"].at(0, 0) == 1.0);
    CHECK(grads["emb"].at(1, 0) == 0.0);
    CHECK(grads["emb"].at(2, 0) == 2.0); // row 2 gathered twice

    CHECK_THROWS_AS(t.embed(table, {3}), error);
    CHECK_THROWS_AS(t.embed(table, {-1}), error);
}

TEST_CASE("counter rng is deterministic and order-independent") {
    counter_rng a(42, 7);
    counter_rng b(42, 7);
    for (int i = 0; i < 100; i++) CHECK(a.next_u64() == b.next_u64());

    // a fresh stream differs
    counter_rng c(42, 8);
    counter_rng d(43, 7);
    bool differs_c = false, differs_d = false;
    counter_rng a2(42, 7);
    for (int i = 0; i < 10; i++) {
        const uint64_t base = a2.next_u64();
        if (c.next_u64() != base) differs_c = true;
        if (d.next_u64() != base) differs_d = true;
    }
    CHECK(differs_c);
    CHECK(differs_d);

    // doubles live in [0, 1)
    counter_rng e(1, 1);
    for (int i = 0; i < 1000; i++) {
        const double x = e.next_double();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("shuffled_indices is a permutation, reproducible, seed-sensitive") {
    const auto s1 = shuffled_indices(100, 5, 1);
    const auto s2 = shuffled_indices(100, 5, 1);
    const auto s3 = shuffled_indices(100, 6, 1);
    CHECK(s1 == s2);
    CHECK(s1 != s3);
    std::set<int64_t> seen(s1.begin(), s1.end());
    CHECK(seen.size() == 100);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 99);
}
