#pragma once

#include "ste/rng.hpp"
#include "ste/tensor.hpp"

#include <string>
#include <vector>

namespace ste {

// Xavier-uniform initialization: entries drawn uniform on +-sqrt(6/(fan_in+fan_out)).
// For matrices fan_out = shape[0] and fan_in = product of the remaining axes;
// for vectors fan_in = fan_out = shape[0]. Deterministic given the rng state.
TensorPtr xavier_init(Shape shape, Rng& rng, const std::string& name, bool requires_grad = true);

// One LSTM layer. Gate equations:
//   f = sigmoid(W_fh h + W_fy x + b_f)
//   i = sigmoid(W_ih h + W_iy x + b_i)
//   o = sigmoid(W_oh h + W_oy x + b_o)
//   c~ = tanh(W_ch h + W_cy x + b_c)
//   c' = i o c~ + f o c,  h' = o o tanh(c')
// W_zh/b_z form the readout head; they are null on layers that feed another layer.
struct LstmParams {
    TensorPtr W_fh, W_ih, W_oh, W_ch; // [N', N']
    TensorPtr W_fy, W_iy, W_oy, W_cy; // [N', D_in]
    TensorPtr b_f, b_i, b_o, b_c;     // [N']
    TensorPtr W_zh;                   // [N_out, N'] or null
    TensorPtr b_z;                    // [N_out] or null

    std::int64_t hidden_dim() const { return W_fh->shape[0]; }
    std::int64_t input_dim() const { return W_fy->shape[1]; }
};

// n_out == 0 leaves the head unallocated.
LstmParams make_lstm_params(std::int64_t d_in, std::int64_t n_hidden, std::int64_t n_out, Rng& rng,
                            const std::string& prefix);

struct LstmState {
    TensorPtr h, c; // each [B, N']
};

LstmState lstm_zero_state(std::int64_t batch, std::int64_t hidden_dim);

// One step of the gating recurrence; x is [B, D_in].
LstmState lstm_step(const TensorPtr& x, const LstmState& state, const LstmParams& p);

// Readout z = W_zh h + b_z.
TensorPtr lstm_output(const LstmParams& p, const TensorPtr& h);

// Stacked LSTM: layer 0 consumes the input sequence, deeper layers consume the
// hidden states of the layer below. Only the top layer carries a head.
struct LstmStack {
    std::vector<LstmParams> layers;
    double dropout_rate = 0.0; // applied between layers during training only
};

LstmStack make_lstm_stack(std::int64_t d_in, std::int64_t n_hidden, int n_layers, std::int64_t n_out,
                          double dropout_rate, Rng& rng, const std::string& prefix);

// Consume the sequence (each element [B, D_in]) and return the top layer's
// final hidden state [B, N']. Dropout masks are drawn from rng when training.
TensorPtr lstm_run(const LstmStack& stack, const std::vector<TensorPtr>& xs, bool training, Rng& rng);

// Stateful single step for closed-loop simulation: advances every layer once,
// mutating `states` (one entry per layer), and returns the top hidden state.
TensorPtr lstm_run_step(const LstmStack& stack, const TensorPtr& x, std::vector<LstmState>& states);

void collect_params(const LstmParams& p, std::vector<TensorPtr>& out);
void collect_params(const LstmStack& s, std::vector<TensorPtr>& out);

// Adam with bias correction.
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    explicit Adam(std::vector<TensorPtr> params, AdamConfig cfg = {});

    // Apply one update from the accumulated grads. Throws when any gradient
    // entry is non-finite, naming the offending parameter.
    void step();
    void zero_grad();

    double& lr() { return cfg_.lr; }
    std::int64_t t() const { return t_; }
    const std::vector<TensorPtr>& params() const { return params_; }

  private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

} // namespace ste
