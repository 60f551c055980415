#include "ste/tensor.hpp"
#include "ste/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ste {

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d, bool req_grad)
    : shape(std::move(s)), data(std::move(d)), requires_grad(req_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                    std::to_string(data.size()));
    for (auto dim : shape)
        if (dim < 0) throw std::invalid_argument("tensor: negative dimension in " + shape_str(shape));
}

double Tensor::value() const {
    if (data.size() != 1) throw std::runtime_error("value(): tensor is not scalar, shape " + shape_str(shape));
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != data.size()) throw std::runtime_error("accumulate_grad: size mismatch");
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

TensorPtr make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data), requires_grad && g_grad_enabled);
}

TensorPtr zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), requires_grad);
}

TensorPtr full(Shape shape, double v, bool requires_grad) {
    auto n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v), requires_grad);
}

TensorPtr scalar(double v, bool requires_grad) { return make_tensor({1}, {v}, requires_grad); }

namespace {

bool taped(const TensorPtr& a) { return g_grad_enabled && a->requires_grad; }
bool taped(const TensorPtr& a, const TensorPtr& b) { return g_grad_enabled && (a->requires_grad || b->requires_grad); }

TensorPtr result_of(Shape shape, std::vector<double> data, bool req) {
    auto t = std::make_shared<Tensor>(std::move(shape), std::move(data), req);
    return t;
}

// b broadcast over a's leading axes: b.shape must equal a trailing suffix of
// a.shape (possibly all of it), or be scalar.
std::int64_t broadcast_block(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (b->size() == 1) return 1;
    const auto& as = a->shape;
    const auto& bs = b->shape;
    if (bs.size() > as.size())
        throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_str(bs) + " against " + shape_str(as));
    for (std::size_t i = 0; i < bs.size(); ++i) {
        if (bs[bs.size() - 1 - i] != as[as.size() - 1 - i])
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
    }
    return b->size();
}

template <typename Fwd>
TensorPtr broadcast_binary(const TensorPtr& a, const TensorPtr& b, const char* op, Fwd f, double da, double db) {
    // da, db: constant partials (only valid for add/sub; mul handles grads itself)
    const std::int64_t block = broadcast_block(a, b, op);
    std::vector<double> out(a->data.size());
    const auto n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = f(a->data[static_cast<std::size_t>(i)], b->data[static_cast<std::size_t>(i % block)]);
    auto r = result_of(a->shape, std::move(out), taped(a, b));
    if (r->requires_grad) {
        r->parents = {a, b};
        Tensor* self = r.get();
        TensorPtr pa = a, pb = b;
        r->backward_fn = [self, pa, pb, block, da, db]() {
            const auto n = self->size();
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) pa->grad[static_cast<std::size_t>(i)] += da * self->grad[static_cast<std::size_t>(i)];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) pb->grad[static_cast<std::size_t>(i % block)] += db * self->grad[static_cast<std::size_t>(i)];
            }
        };
    }
    return r;
}

} // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return broadcast_binary(a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0);
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return broadcast_binary(a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0);
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    const std::int64_t block = broadcast_block(a, b, "mul");
    std::vector<double> out(a->data.size());
    const auto n = a->size();
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = a->data[static_cast<std::size_t>(i)] * b->data[static_cast<std::size_t>(i % block)];
    auto r = result_of(a->shape, std::move(out), taped(a, b));
    if (r->requires_grad) {
        r->parents = {a, b};
        Tensor* self = r.get();
        TensorPtr pa = a, pb = b;
        r->backward_fn = [self, pa, pb, block]() {
            const auto n = self->size();
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i)
                    pa->grad[static_cast<std::size_t>(i)] +=
                        pb->data[static_cast<std::size_t>(i % block)] * self->grad[static_cast<std::size_t>(i)];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i)
                    pb->grad[static_cast<std::size_t>(i % block)] +=
                        pa->data[static_cast<std::size_t>(i)] * self->grad[static_cast<std::size_t>(i)];
            }
        };
    }
    return r;
}

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a->data[i];
    auto r = result_of(a->shape, std::move(out), taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        r->backward_fn = [self, pa, c]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += c * self->grad[i];
        };
    }
    return r;
}

TensorPtr add_scalar(const TensorPtr& a, double c) {
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + c;
    auto r = result_of(a->shape, std::move(out), taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        r->backward_fn = [self, pa]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += self->grad[i];
        };
    }
    return r;
}

namespace {

struct MatDims {
    std::int64_t batch_a, batch_b, batch_out; // number of leading slices
    std::int64_t m, k, n;
    Shape out_shape;
};

MatDims matmul_dims(const TensorPtr& a, const TensorPtr& b) {
    const auto& as = a->shape;
    const auto& bs = b->shape;
    if (as.size() < 2 || bs.size() < 2)
        throw std::invalid_argument("matmul: operands must have >= 2 dims, got " + shape_str(as) + " and " + shape_str(bs));
    MatDims d;
    d.m = as[as.size() - 2];
    d.k = as[as.size() - 1];
    const std::int64_t kb = bs[bs.size() - 2];
    d.n = bs[bs.size() - 1];
    if (d.k != kb)
        throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(as) + " x " + shape_str(bs));
    Shape lead_a(as.begin(), as.end() - 2), lead_b(bs.begin(), bs.end() - 2);
    Shape lead;
    if (lead_a == lead_b) {
        lead = lead_a;
    } else if (lead_a.empty()) {
        lead = lead_b;
    } else if (lead_b.empty()) {
        lead = lead_a;
    } else {
        throw std::invalid_argument("matmul: incompatible batch axes " + shape_str(as) + " x " + shape_str(bs));
    }
    d.batch_out = shape_numel(lead);
    d.batch_a = lead_a.empty() ? 1 : d.batch_out;
    d.batch_b = lead_b.empty() ? 1 : d.batch_out;
    d.out_shape = lead;
    d.out_shape.push_back(d.m);
    d.out_shape.push_back(d.n);
    return d;
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_acc(const double* A, const double* B, double* C, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = A + i * k;
        double* crow = C + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = B + kk * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T
void gemm_bt_acc(const double* A, const double* B, double* C, std::int64_t m, std::int64_t n, std::int64_t k) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = A + i * n;
        double* crow = C + i * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double* brow = B + kk * n;
            double acc = 0.0;
            for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[kk] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_at_acc(const double* A, const double* B, double* C, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = A + i * k;
        const double* brow = B + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* crow = C + kk * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    const MatDims d = matmul_dims(a, b);
    std::vector<double> out(static_cast<std::size_t>(d.batch_out * d.m * d.n), 0.0);
    for (std::int64_t s = 0; s < d.batch_out; ++s) {
        const double* A = a->data.data() + (d.batch_a == 1 ? 0 : s) * d.m * d.k;
        const double* B = b->data.data() + (d.batch_b == 1 ? 0 : s) * d.k * d.n;
        gemm_acc(A, B, out.data() + s * d.m * d.n, d.m, d.k, d.n);
    }
    auto r = result_of(d.out_shape, std::move(out), taped(a, b));
    if (r->requires_grad) {
        r->parents = {a, b};
        Tensor* self = r.get();
        TensorPtr pa = a, pb = b;
        r->backward_fn = [self, pa, pb, d]() {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::int64_t s = 0; s < d.batch_out; ++s) {
                    const double* G = self->grad.data() + s * d.m * d.n;
                    const double* B = pb->data.data() + (d.batch_b == 1 ? 0 : s) * d.k * d.n;
                    double* GA = pa->grad.data() + (d.batch_a == 1 ? 0 : s) * d.m * d.k;
                    gemm_bt_acc(G, B, GA, d.m, d.n, d.k); // dA = G * B^T
                }
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::int64_t s = 0; s < d.batch_out; ++s) {
                    const double* G = self->grad.data() + s * d.m * d.n;
                    const double* A = pa->data.data() + (d.batch_a == 1 ? 0 : s) * d.m * d.k;
                    double* GB = pb->grad.data() + (d.batch_b == 1 ? 0 : s) * d.k * d.n;
                    gemm_at_acc(A, G, GB, d.m, d.k, d.n); // dB = A^T * G
                }
            }
        };
    }
    return r;
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& W, const TensorPtr& b) {
    if (x->shape.size() != 2 || W->shape.size() != 2)
        throw std::invalid_argument("linear: expected 2-D x and W, got " + shape_str(x->shape) + " and " + shape_str(W->shape));
    const std::int64_t B = x->shape[0], in = x->shape[1];
    const std::int64_t out_dim = W->shape[0];
    if (W->shape[1] != in)
        throw std::invalid_argument("linear: W " + shape_str(W->shape) + " incompatible with x " + shape_str(x->shape));
    if (b && b->size() != out_dim)
        throw std::invalid_argument("linear: bias " + shape_str(b->shape) + " incompatible with W " + shape_str(W->shape));
    std::vector<double> out(static_cast<std::size_t>(B * out_dim));
    for (std::int64_t i = 0; i < B; ++i) {
        const double* xrow = x->data.data() + i * in;
        double* orow = out.data() + i * out_dim;
        for (std::int64_t o = 0; o < out_dim; ++o) {
            const double* wrow = W->data.data() + o * in;
            double acc = b ? b->data[static_cast<std::size_t>(o)] : 0.0;
            for (std::int64_t j = 0; j < in; ++j) acc += xrow[j] * wrow[j];
            orow[o] = acc;
        }
    }
    auto r = result_of({B, out_dim}, std::move(out),
                       g_grad_enabled && (x->requires_grad || W->requires_grad || (b && b->requires_grad)));
    if (r->requires_grad) {
        r->parents = {x, W};
        if (b) r->parents.push_back(b);
        Tensor* self = r.get();
        TensorPtr px = x, pW = W, pb = b;
        r->backward_fn = [self, px, pW, pb, B, in, out_dim]() {
            if (px->requires_grad) {
                px->ensure_grad();
                gemm_acc(self->grad.data(), pW->data.data(), px->grad.data(), B, out_dim, in); // dX = G * W
            }
            if (pW->requires_grad) {
                pW->ensure_grad();
                gemm_at_acc(self->grad.data(), px->data.data(), pW->grad.data(), B, out_dim, in); // dW = G^T * X
            }
            if (pb && pb->requires_grad) {
                pb->ensure_grad();
                for (std::int64_t i = 0; i < B; ++i) {
                    const double* grow = self->grad.data() + i * out_dim;
                    for (std::int64_t o = 0; o < out_dim; ++o) pb->grad[static_cast<std::size_t>(o)] += grow[o];
                }
            }
        };
    }
    return r;
}

namespace {

template <typename F, typename DF>
TensorPtr unary(const TensorPtr& a, F f, DF df) {
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a->data[i]);
    auto r = result_of(a->shape, std::move(out), taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        r->backward_fn = [self, pa, df]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->grad.size(); ++i)
                pa->grad[i] += df(pa->data[i], self->data[i]) * self->grad[i];
        };
    }
    return r;
}

} // namespace

// ReLU derivative at 0 is taken as 0.
TensorPtr relu(const TensorPtr& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

TensorPtr sigmoid(const TensorPtr& a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr tanh_op(const TensorPtr& a) {
    return unary(
        a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

TensorPtr reshape(const TensorPtr& a, Shape new_shape) {
    if (shape_numel(new_shape) != a->size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a->shape) + " as " + shape_str(new_shape));
    auto r = result_of(std::move(new_shape), a->data, taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        r->backward_fn = [self, pa]() { pa->accumulate_grad(self->grad); };
    }
    return r;
}

namespace {

std::vector<std::int64_t> strides_of(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Mapping old flat index -> new flat index for a permutation of axes.
std::vector<std::int64_t> permute_map(const Shape& in_shape, const std::vector<int>& perm) {
    const auto rank = in_shape.size();
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
    const auto in_st = strides_of(in_shape);
    const auto out_st = strides_of(out_shape);
    const auto n = shape_numel(in_shape);
    std::vector<std::int64_t> map(static_cast<std::size_t>(n));
    std::vector<std::int64_t> idx(rank, 0);
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat;
        std::int64_t dst = 0;
        for (std::size_t d = 0; d < rank; ++d) {
            idx[d] = rem / in_st[d];
            rem %= in_st[d];
        }
        for (std::size_t d = 0; d < rank; ++d) dst += idx[perm[d]] * out_st[d];
        map[static_cast<std::size_t>(flat)] = dst;
    }
    return map;
}

} // namespace

TensorPtr permute(const TensorPtr& a, const std::vector<int>& perm) {
    if (perm.size() != a->shape.size()) throw std::invalid_argument("permute: rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (int p : perm) {
        if (p < 0 || p >= static_cast<int>(perm.size()) || seen[p]) throw std::invalid_argument("permute: invalid permutation");
        seen[p] = true;
    }
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a->shape[perm[i]];
    auto map = permute_map(a->shape, perm);
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[map[i]] = a->data[i];
    auto r = result_of(std::move(out_shape), std::move(out), taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        auto mp = std::make_shared<std::vector<std::int64_t>>(std::move(map));
        r->backward_fn = [self, pa, mp]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += self->grad[(*mp)[i]];
        };
    }
    return r;
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const auto& s0 = parts[0]->shape;
    if (axis < 0 || axis >= static_cast<int>(s0.size())) throw std::invalid_argument("concat: bad axis");
    Shape out_shape = s0;
    std::int64_t axis_total = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < s0.size(); ++d)
            if (static_cast<int>(d) != axis && p->shape[d] != s0[d])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(p->shape) + " vs " + shape_str(s0));
        axis_total += p->shape[axis];
    }
    out_shape[axis] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

    std::vector<double> out(static_cast<std::size_t>(outer * axis_total * inner));
    std::int64_t offset = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        const std::int64_t len = p->shape[axis] * inner;
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(p->data.data() + o * len, len, out.data() + o * axis_total * inner + offset);
        offset += len;
        any_grad = any_grad || p->requires_grad;
    }
    auto r = result_of(std::move(out_shape), std::move(out), g_grad_enabled && any_grad);
    if (r->requires_grad) {
        r->parents = parts;
        Tensor* self = r.get();
        auto ps = parts;
        r->backward_fn = [self, ps, outer, inner, axis_total, axis]() {
            std::int64_t offset = 0;
            for (const auto& p : ps) {
                const std::int64_t len = p->shape[axis] * inner;
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const double* src = self->grad.data() + o * axis_total * inner + offset;
                        double* dst = p->grad.data() + o * len;
                        for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
                    }
                }
                offset += len;
            }
        };
    }
    return r;
}

TensorPtr slice(const TensorPtr& a, int axis, std::int64_t start, std::int64_t len) {
    const auto& s = a->shape;
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw std::invalid_argument("slice: bad axis");
    if (start < 0 || len < 0 || start + len > s[axis])
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                    ") out of bounds for axis size " + std::to_string(s[axis]));
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    Shape out_shape = s;
    out_shape[axis] = len;
    std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(a->data.data() + (o * s[axis] + start) * inner, len * inner, out.data() + o * len * inner);
    auto r = result_of(std::move(out_shape), std::move(out), taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        const std::int64_t ax = s[axis];
        r->backward_fn = [self, pa, outer, inner, ax, start, len]() {
            pa->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                const double* src = self->grad.data() + o * len * inner;
                double* dst = pa->grad.data() + (o * ax + start) * inner;
                for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        };
    }
    return r;
}

TensorPtr reduce_sum(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->data) s += v;
    auto r = result_of({1}, {s}, taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        r->backward_fn = [self, pa]() {
            pa->ensure_grad();
            const double g = self->grad[0];
            for (auto& v : pa->grad) v += g;
        };
    }
    return r;
}

TensorPtr reduce_mean(const TensorPtr& a) {
    if (a->data.empty()) throw std::invalid_argument("reduce_mean: empty tensor");
    return scale(reduce_sum(a), 1.0 / static_cast<double>(a->data.size()));
}

TensorPtr rowwise_norm_pow(const TensorPtr& a, double beta) {
    if (a->shape.size() != 2) throw std::invalid_argument("rowwise_norm_pow: expected 2-D input, got " + shape_str(a->shape));
    const std::int64_t R = a->shape[0], K = a->shape[1];
    std::vector<double> out(static_cast<std::size_t>(R));
    for (std::int64_t i = 0; i < R; ++i) {
        double ss = 0.0;
        const double* row = a->data.data() + i * K;
        for (std::int64_t j = 0; j < K; ++j) ss += row[j] * row[j];
        out[static_cast<std::size_t>(i)] = std::pow(ss, beta / 2.0);
    }
    auto r = result_of({R}, std::move(out), taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        r->backward_fn = [self, pa, R, K, beta]() {
            pa->ensure_grad();
            for (std::int64_t i = 0; i < R; ++i) {
                const double* row = pa->data.data() + i * K;
                double ss = 0.0;
                for (std::int64_t j = 0; j < K; ++j) ss += row[j] * row[j];
                if (ss == 0.0) continue; // zero at the kink
                const double coef = beta * std::pow(ss, beta / 2.0 - 1.0) * self->grad[static_cast<std::size_t>(i)];
                double* grow = pa->grad.data() + i * K;
                for (std::int64_t j = 0; j < K; ++j) grow[j] += coef * row[j];
            }
        };
    }
    return r;
}

TensorPtr l2_norm(const TensorPtr& a) {
    auto flat = reshape(a, {1, a->size()});
    return reshape(rowwise_norm_pow(flat, 1.0), {1});
}

TensorPtr dropout(const TensorPtr& a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    const double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(a->data.size());
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = rng.uniform(0.0, 1.0) < rate ? 0.0 : 1.0 / keep;
        out[i] = a->data[i] * (*mask)[i];
    }
    auto r = result_of(a->shape, std::move(out), taped(a));
    if (r->requires_grad) {
        r->parents = {a};
        Tensor* self = r.get();
        TensorPtr pa = a;
        r->backward_fn = [self, pa, mask]() {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += (*mask)[i] * self->grad[i];
        };
    }
    return r;
}

void backward(const TensorPtr& loss) {
    if (loss->size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss->shape));
    if (!loss->requires_grad) throw std::invalid_argument("backward: loss is not attached to the tape");

    // Iterative post-order DFS; the tape is a DAG by construction.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Tensor* next = node->parents[child].get();
            ++child;
            if (next->requires_grad && !visited.count(next)) {
                visited.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

void ensure_finite(const TensorPtr& t, const std::string& where) {
    for (double v : t->data)
        if (!std::isfinite(v)) throw std::runtime_error("non-finite value in " + where);
}

} // namespace ste
