#include "ste/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ste {

TensorPtr xavier_init(Shape shape, Rng& rng, const std::string& name, bool requires_grad) {
    if (shape.empty()) throw std::invalid_argument("xavier_init: empty shape");
    std::int64_t fan_out = shape[0];
    std::int64_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    if (shape.size() == 1) fan_in = shape[0];
    if (fan_in <= 0 || fan_out <= 0)
        throw std::invalid_argument("xavier_init: zero fan for shape " + shape_str(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    const auto n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = rng.uniform(-bound, bound);
    auto t = make_tensor(std::move(shape), std::move(data), requires_grad);
    t->requires_grad = requires_grad; // parameters stay trainable even under NoGradGuard
    t->name = name;
    return t;
}

namespace {

TensorPtr named_zeros(Shape shape, const std::string& name) {
    auto t = zeros(std::move(shape));
    t->requires_grad = true;
    t->name = name;
    return t;
}

} // namespace

LstmParams make_lstm_params(std::int64_t d_in, std::int64_t n_hidden, std::int64_t n_out, Rng& rng,
                            const std::string& prefix) {
    if (d_in < 1 || n_hidden < 1) throw std::invalid_argument("make_lstm_params: dims must be positive");
    LstmParams p;
    p.W_fh = xavier_init({n_hidden, n_hidden}, rng, prefix + ".W_fh");
    p.W_ih = xavier_init({n_hidden, n_hidden}, rng, prefix + ".W_ih");
    p.W_oh = xavier_init({n_hidden, n_hidden}, rng, prefix + ".W_oh");
    p.W_ch = xavier_init({n_hidden, n_hidden}, rng, prefix + ".W_ch");
    p.W_fy = xavier_init({n_hidden, d_in}, rng, prefix + ".W_fy");
    p.W_iy = xavier_init({n_hidden, d_in}, rng, prefix + ".W_iy");
    p.W_oy = xavier_init({n_hidden, d_in}, rng, prefix + ".W_oy");
    p.W_cy = xavier_init({n_hidden, d_in}, rng, prefix + ".W_cy");
    p.b_f = named_zeros({n_hidden}, prefix + ".b_f");
    p.b_i = named_zeros({n_hidden}, prefix + ".b_i");
    p.b_o = named_zeros({n_hidden}, prefix + ".b_o");
    p.b_c = named_zeros({n_hidden}, prefix + ".b_c");
    if (n_out > 0) {
        p.W_zh = xavier_init({n_out, n_hidden}, rng, prefix + ".W_zh");
        p.b_z = named_zeros({n_out}, prefix + ".b_z");
    }
    return p;
}

LstmState lstm_zero_state(std::int64_t batch, std::int64_t hidden_dim) {
    return {zeros({batch, hidden_dim}), zeros({batch, hidden_dim})};
}

LstmState lstm_step(const TensorPtr& x, const LstmState& state, const LstmParams& p) {
    if (x->shape.size() != 2 || x->shape[1] != p.input_dim())
        throw std::invalid_argument("lstm_step: input " + shape_str(x->shape) + " does not match layer input dim " +
                                    std::to_string(p.input_dim()));
    if (state.h->shape != Shape{x->shape[0], p.hidden_dim()})
        throw std::invalid_argument("lstm_step: state " + shape_str(state.h->shape) + " does not match batch/hidden dims");
    auto f = sigmoid(add(linear(state.h, p.W_fh, p.b_f), linear(x, p.W_fy)));
    auto i = sigmoid(add(linear(state.h, p.W_ih, p.b_i), linear(x, p.W_iy)));
    auto o = sigmoid(add(linear(state.h, p.W_oh, p.b_o), linear(x, p.W_oy)));
    auto ctilde = tanh_op(add(linear(state.h, p.W_ch, p.b_c), linear(x, p.W_cy)));
    auto c_next = add(mul(i, ctilde), mul(f, state.c));
    auto h_next = mul(o, tanh_op(c_next));
    return {h_next, c_next};
}

TensorPtr lstm_output(const LstmParams& p, const TensorPtr& h) {
    if (!p.W_zh) throw std::logic_error("lstm_output: layer has no readout head");
    return linear(h, p.W_zh, p.b_z);
}

LstmStack make_lstm_stack(std::int64_t d_in, std::int64_t n_hidden, int n_layers, std::int64_t n_out,
                          double dropout_rate, Rng& rng, const std::string& prefix) {
    if (n_layers < 1) throw std::invalid_argument("make_lstm_stack: need at least one layer");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("make_lstm_stack: dropout must be in [0,1)");
    LstmStack s;
    s.dropout_rate = dropout_rate;
    for (int l = 0; l < n_layers; ++l) {
        const std::int64_t in = l == 0 ? d_in : n_hidden;
        const std::int64_t out = l == n_layers - 1 ? n_out : 0;
        s.layers.push_back(make_lstm_params(in, n_hidden, out, rng, prefix + ".lstm" + std::to_string(l)));
    }
    return s;
}

TensorPtr lstm_run(const LstmStack& stack, const std::vector<TensorPtr>& xs, bool training, Rng& rng) {
    if (xs.empty()) throw std::invalid_argument("lstm_run: empty sequence");
    const std::int64_t batch = xs[0]->shape[0];
    std::vector<LstmState> states;
    states.reserve(stack.layers.size());
    for (const auto& layer : stack.layers) states.push_back(lstm_zero_state(batch, layer.hidden_dim()));
    for (const auto& x : xs) {
        TensorPtr cur = x;
        for (std::size_t l = 0; l < stack.layers.size(); ++l) {
            states[l] = lstm_step(cur, states[l], stack.layers[l]);
            cur = states[l].h;
            if (training && stack.dropout_rate > 0.0 && l + 1 < stack.layers.size())
                cur = dropout(cur, stack.dropout_rate, rng);
        }
    }
    return states.back().h;
}

TensorPtr lstm_run_step(const LstmStack& stack, const TensorPtr& x, std::vector<LstmState>& states) {
    if (states.size() != stack.layers.size()) throw std::invalid_argument("lstm_run_step: state count mismatch");
    TensorPtr cur = x;
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        states[l] = lstm_step(cur, states[l], stack.layers[l]);
        cur = states[l].h;
    }
    return cur;
}

void collect_params(const LstmParams& p, std::vector<TensorPtr>& out) {
    for (const auto& t : {p.W_fh, p.W_ih, p.W_oh, p.W_ch, p.W_fy, p.W_iy, p.W_oy, p.W_cy,
                          p.b_f, p.b_i, p.b_o, p.b_c}) out.push_back(t);
    if (p.W_zh) out.push_back(p.W_zh);
    if (p.b_z) out.push_back(p.b_z);
}

void collect_params(const LstmStack& s, std::vector<TensorPtr>& out) {
    for (const auto& layer : s.layers) collect_params(layer, out);
}

Adam::Adam(std::vector<TensorPtr> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p->data.size(), 0.0);
        v_.emplace_back(p->data.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = *params_[pi];
        p.ensure_grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            if (!std::isfinite(g))
                throw std::runtime_error("adam: non-finite gradient in parameter '" +
                                         (p.name.empty() ? std::string("<unnamed>") : p.name) + "'");
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p->ensure_grad();
        p->zero_grad();
    }
}

} // namespace ste
