#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include "ste/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

using namespace ste;
using ste::testing::max_grad_rel_err;
using ste::testing::random_tensor;

namespace {

void set_all(const TensorPtr& t, double v) { std::fill(t->data.begin(), t->data.end(), v); }

void zero_gates(LstmParams& p) {
    for (auto& t : {p.W_fh, p.W_ih, p.W_oh, p.W_ch, p.W_fy, p.W_iy, p.W_oy, p.W_cy, p.b_f, p.b_i, p.b_o, p.b_c})
        set_all(t, 0.0);
}

} // namespace

TEST_CASE("xavier_init: support, variance, determinism") {
    Rng rng(100);
    auto t = xavier_init({100, 100}, rng, "W");
    const double bound = std::sqrt(6.0 / 200.0);
    double mean = 0.0, sq = 0.0;
    for (double v : t->data) {
        CHECK(std::abs(v) <= bound);
        mean += v;
        sq += v * v;
    }
    mean /= 1e4;
    const double var = sq / 1e4 - mean * mean;
    const double glorot = 2.0 / 200.0;
    CHECK(var > 0.8 * glorot);
    CHECK(var < 1.2 * glorot);

    Rng r1(77), r2(77);
    auto a = xavier_init({5, 3}, r1, "a");
    auto b = xavier_init({5, 3}, r2, "b");
    CHECK(a->data == b->data);

    CHECK_THROWS_AS((void)xavier_init({0, 4}, rng, "z"), std::invalid_argument);
    CHECK_THROWS_AS((void)xavier_init({}, rng, "z"), std::invalid_argument);
}

TEST_CASE("lstm_step with all-zero parameters") {
    Rng rng(1);
    auto p = make_lstm_params(3, 4, 0, rng, "l0");
    zero_gates(p);

    auto x = random_tensor({2, 3}, rng);
    SUBCASE("zero state stays zero") {
        auto s = lstm_zero_state(2, 4);
        auto next = lstm_step(x, s, p);
        for (double v : next.c->data) CHECK(v == 0.0);
        for (double v : next.h->data) CHECK(v == 0.0);
    }
    SUBCASE("cell state halves: forget gate sits at sigmoid(0)") {
        auto s = lstm_zero_state(2, 4);
        set_all(s.c, 0.8);
        auto next = lstm_step(x, s, p);
        for (double v : next.c->data) CHECK(v == doctest::Approx(0.4));
    }
}

TEST_CASE("lstm_step scalar hand evaluation") {
    // N'=D_in=1, all weights 1, biases 0, x=1, h=0, c=0
    Rng rng(2);
    auto p = make_lstm_params(1, 1, 0, rng, "l0");
    for (auto& t : {p.W_fh, p.W_ih, p.W_oh, p.W_ch, p.W_fy, p.W_iy, p.W_oy, p.W_cy}) set_all(t, 1.0);
    for (auto& t : {p.b_f, p.b_i, p.b_o, p.b_c}) set_all(t, 0.0);
    auto x = make_tensor({1, 1}, {1.0});
    auto next = lstm_step(x, lstm_zero_state(1, 1), p);
    const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
    const double c_want = sig1 * std::tanh(1.0);
    CHECK(next.c->data[0] == doctest::Approx(c_want).epsilon(1e-12));
    CHECK(next.h->data[0] == doctest::Approx(sig1 * std::tanh(c_want)).epsilon(1e-12));
}

TEST_CASE("lstm_step rejects mismatched shapes") {
    Rng rng(3);
    auto p = make_lstm_params(3, 4, 0, rng, "l0");
    auto bad_x = random_tensor({2, 5}, rng);
    CHECK_THROWS_AS((void)lstm_step(bad_x, lstm_zero_state(2, 4), p), std::invalid_argument);
    auto x = random_tensor({2, 3}, rng);
    CHECK_THROWS_AS((void)lstm_step(x, lstm_zero_state(3, 4), p), std::invalid_argument);
}

TEST_CASE("cell-state bound |c'| <= |c|*sigma_max + 1") {
    Rng rng(17);
    auto p = make_lstm_params(3, 5, 0, rng, "l0");
    auto s = lstm_zero_state(4, 5);
    for (auto& v : s.c->data) v = rng.uniform(-3.0, 3.0);
    for (auto& v : s.h->data) v = rng.uniform(-1.0, 1.0);
    auto x = random_tensor({4, 3}, rng);
    auto f = sigmoid(add(linear(s.h, p.W_fh, p.b_f), linear(x, p.W_fy)));
    const double sigma_max = *std::max_element(f->data.begin(), f->data.end());
    auto next = lstm_step(x, s, p);
    for (std::size_t i = 0; i < next.c->data.size(); ++i)
        CHECK(std::abs(next.c->data[i]) <= std::abs(s.c->data[i]) * sigma_max + 1.0 + 1e-12);
}

TEST_CASE("lstm head readout") {
    Rng rng(4);
    auto p = make_lstm_params(2, 3, 4, rng, "l0");
    REQUIRE(p.W_zh);
    REQUIRE(p.W_zh->shape == Shape{4, 3});
    auto h = random_tensor({5, 3}, rng);
    auto z = lstm_output(p, h);
    CHECK(z->shape == Shape{5, 4});

    auto headless = make_lstm_params(2, 3, 0, rng, "l1");
    CHECK_THROWS_AS((void)lstm_output(headless, h), std::logic_error);
}

TEST_CASE("lstm_run equals manual unrolling and is deterministic") {
    Rng rng(5);
    auto stack = make_lstm_stack(2, 3, 2, 4, 0.0, rng, "m");
    REQUIRE(stack.layers.size() == 2);
    CHECK(stack.layers[0].input_dim() == 2);
    CHECK(stack.layers[1].input_dim() == 3);
    CHECK(stack.layers[0].W_zh == nullptr);
    REQUIRE(stack.layers[1].W_zh != nullptr);

    std::vector<TensorPtr> xs;
    for (int t = 0; t < 4; ++t) xs.push_back(random_tensor({3, 2}, rng));

    Rng unused(0);
    auto h_top = lstm_run(stack, xs, false, unused);
    REQUIRE(h_top->shape == Shape{3, 3});

    auto s0 = lstm_zero_state(3, 3), s1 = lstm_zero_state(3, 3);
    for (const auto& x : xs) {
        s0 = lstm_step(x, s0, stack.layers[0]);
        s1 = lstm_step(s0.h, s1, stack.layers[1]);
    }
    for (std::size_t i = 0; i < h_top->data.size(); ++i) CHECK(h_top->data[i] == s1.h->data[i]);

    // stateful stepping reproduces the same trace
    std::vector<LstmState> states = {lstm_zero_state(3, 3), lstm_zero_state(3, 3)};
    TensorPtr last;
    for (const auto& x : xs) last = lstm_run_step(stack, x, states);
    for (std::size_t i = 0; i < h_top->data.size(); ++i) CHECK(last->data[i] == h_top->data[i]);
}

TEST_CASE("gradients through an unrolled LSTM match finite differences") {
    Rng rng(6);
    auto p = make_lstm_params(2, 3, 2, rng, "l0");
    std::vector<TensorPtr> xs = {random_tensor({2, 2}, rng), random_tensor({2, 2}, rng),
                                 random_tensor({2, 2}, rng)};
    std::vector<TensorPtr> params;
    collect_params(p, params);
    auto fn = [&]() {
        auto s = lstm_zero_state(2, 3);
        for (const auto& x : xs) s = lstm_step(x, s, p);
        auto z = lstm_output(p, s.h);
        return reduce_mean(mul(z, z));
    };
    CHECK(max_grad_rel_err(params, fn) < 1e-4);
}

TEST_CASE("adam: zero grad leaves parameters unchanged") {
    auto w = make_tensor({3}, {1.0, -2.0, 0.5}, true);
    w->requires_grad = true;
    w->name = "w";
    Adam opt({w});
    opt.zero_grad();
    opt.step();
    CHECK(w->data == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("adam: first step with unit gradient moves by ~lr") {
    auto w = make_tensor({2}, {1.0, 1.0}, true);
    w->requires_grad = true;
    w->name = "w";
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam opt({w}, cfg);
    w->ensure_grad();
    w->grad = {1.0, 1.0};
    opt.step();
    // bias-corrected mhat/sqrt(vhat) = 1 on the first step up to eps
    CHECK(w->data[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(w->data[1] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(opt.t() == 1);
}

TEST_CASE("adam: identical states give identical trajectories") {
    auto run = [](int steps) {
        auto w = make_tensor({2}, {0.3, -0.7}, true);
        w->requires_grad = true;
        Adam opt({w}, {.lr = 0.05});
        for (int t = 1; t <= steps; ++t) {
            opt.zero_grad();
            w->grad = {std::sin(0.1 * t), std::cos(0.2 * t)};
            opt.step();
        }
        return w->data;
    };
    CHECK(run(25) == run(25));
}

TEST_CASE("adam: non-finite gradient is reported with the parameter name") {
    auto w = make_tensor({2}, {0.0, 0.0}, true);
    w->requires_grad = true;
    w->name = "head.W_zh";
    Adam opt({w});
    w->ensure_grad();
    w->grad = {1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_WITH_AS(opt.step(), "adam: non-finite gradient in parameter 'head.W_zh'", std::runtime_error);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    auto w = make_tensor({1}, {5.0}, true);
    w->requires_grad = true;
    Adam opt({w}, {.lr = 0.05});
    for (int t = 0; t < 400; ++t) {
        opt.zero_grad();
        auto loss = reduce_sum(mul(w, w));
        backward(loss);
        opt.step();
    }
    CHECK(std::abs(w->data[0]) < 0.05);
}

TEST_CASE("dropout between stacked layers only during training") {
    Rng rng(8);
    auto stack = make_lstm_stack(2, 6, 2, 3, 0.5, rng, "m");
    std::vector<TensorPtr> xs = {random_tensor({4, 2}, rng)};
    Rng d1(10);
    auto out_eval_a = lstm_run(stack, xs, false, d1);
    Rng d2(11);
    auto out_eval_b = lstm_run(stack, xs, false, d2);
    CHECK(out_eval_a->data == out_eval_b->data); // rng unused at eval time

    Rng t1(10), t2(10);
    auto tr1 = lstm_run(stack, xs, true, t1);
    auto tr2 = lstm_run(stack, xs, true, t2);
    CHECK(tr1->data == tr2->data); // same mask stream
}
