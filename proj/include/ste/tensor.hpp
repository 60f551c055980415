#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ste {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;
using Shape = std::vector<std::int64_t>;

// Dense row-major tensor of doubles with an operation-level reverse-mode
// tape. Values are immutable once created; only grad accumulates.
struct Tensor : std::enable_shared_from_this<Tensor> {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // allocated lazily, same length as data
    std::string name;         // set on parameters, used in diagnostics

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    Tensor(Shape s, std::vector<double> d, bool req_grad);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    double value() const; // throws unless scalar
    void ensure_grad();
    void zero_grad();
    void accumulate_grad(const std::vector<double>& g);
};

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Tape switch. Inference paths wrap themselves in NoGradGuard so no graph is
// recorded; ops then produce plain value tensors.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Constructors
TensorPtr make_tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
TensorPtr zeros(Shape shape, bool requires_grad = false);
TensorPtr full(Shape shape, double v, bool requires_grad = false);
TensorPtr scalar(double v, bool requires_grad = false);

// Elementwise arithmetic. `b` may have a shape equal to a trailing suffix of
// `a`'s shape (broadcast over the leading batch axes) or be a scalar.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr add_scalar(const TensorPtr& a, double c);

// Matrix product over the trailing two axes. Either operand may be 2-D while
// the other carries leading batch axes (the 2-D side is broadcast); otherwise
// leading axes must match.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

// x:[B,in] * W:[out,in]^T + b:[out] -> [B,out].  Pass b == nullptr to skip the bias.
TensorPtr linear(const TensorPtr& x, const TensorPtr& W, const TensorPtr& b = nullptr);

// Activations
TensorPtr relu(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr tanh_op(const TensorPtr& a);

// Shape ops
TensorPtr reshape(const TensorPtr& a, Shape new_shape);
TensorPtr permute(const TensorPtr& a, const std::vector<int>& perm);
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);
TensorPtr slice(const TensorPtr& a, int axis, std::int64_t start, std::int64_t len);

// Reductions
TensorPtr reduce_sum(const TensorPtr& a);  // -> scalar
TensorPtr reduce_mean(const TensorPtr& a); // -> scalar

// Row-wise ||x_r||_2^beta over a 2-D input: [R,K] -> [R]. The gradient at a
// zero row is defined as zero (the subgradient choice).
TensorPtr rowwise_norm_pow(const TensorPtr& a, double beta);

// L2 norm of the flattened tensor -> scalar
TensorPtr l2_norm(const TensorPtr& a);

// Training-time dropout; mask drawn from the caller's rng stream.
TensorPtr dropout(const TensorPtr& a, double rate, class Rng& rng);

// Reverse-mode accumulation from a scalar loss into every requires_grad
// tensor reachable through the tape.
void backward(const TensorPtr& loss);

// Throws (naming `where`) if any entry is not finite.
void ensure_finite(const TensorPtr& t, const std::string& where);

} // namespace ste
