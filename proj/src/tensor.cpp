#include "decompl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <unordered_set>

#include "decompl/errors.hpp"
#include "decompl/flops.hpp"

namespace decompl {

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << "x";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

namespace {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

}  // namespace

// One node of the dynamically recorded tape. backprop reads this node's
// grad and accumulates into the parents' grads; parents keep the upstream
// nodes alive, so closures capture raw pointers only (no ownership cycles).
struct Tensor::Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;
};

Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
Tensor::~Tensor() = default;
Tensor::Tensor(const Tensor&) = default;
Tensor::Tensor(Tensor&&) noexcept = default;
Tensor& Tensor::operator=(const Tensor&) = default;
Tensor& Tensor::operator=(Tensor&&) noexcept = default;

// All op machinery lives behind this struct so the node layout stays
// private to this translation unit.
struct TensorOps {
    using Node = Tensor::Node;

    static std::shared_ptr<Node> node(const Tensor& t) {
        if (!t.node_) throw ContractError("operation on an undefined tensor");
        return t.node_;
    }

    static Tensor make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        n->leaf = true;
        if (requires_grad) n->grad.assign(n->data.size(), 0.0);
        return Tensor(std::move(n));
    }

    // Result node wiring: requires_grad is inherited from any parent; the
    // backprop closure is only attached when somebody upstream tracks
    // gradients.
    static Tensor make_op(Shape shape, std::vector<double> data,
                          std::vector<std::shared_ptr<Node>> parents,
                          std::function<void()> backprop) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->leaf = false;
        bool track = false;
        for (const auto& p : parents) track = track || p->requires_grad;
        n->requires_grad = track;
        if (track) {
            n->parents = std::move(parents);
            n->backprop = std::move(backprop);
        }
        return Tensor(std::move(n));
    }

    static void ensure_grad(Node* n) {
        if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
    }

    static void backward(const std::shared_ptr<Node>& root);
};

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return TensorOps::make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return TensorOps::make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size()) {
        throw DimensionError("from_data: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
    return TensorOps::make_leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return TensorOps::make_leaf(Shape{1}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return TensorOps::node(*this)->shape; }
std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) throw DimensionError("dim: axis out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::size() const { return TensorOps::node(*this)->data.size(); }

std::vector<double>& Tensor::data() { return TensorOps::node(*this)->data; }
const std::vector<double>& Tensor::data() const { return TensorOps::node(*this)->data; }
bool Tensor::requires_grad() const { return TensorOps::node(*this)->requires_grad; }

std::vector<double>& Tensor::grad() {
    auto n = TensorOps::node(*this);
    if (!n->requires_grad) throw ContractError("grad() on a tensor that does not require gradients");
    TensorOps::ensure_grad(n.get());
    return n->grad;
}

const std::vector<double>& Tensor::grad() const {
    auto n = TensorOps::node(*this);
    if (!n->requires_grad) throw ContractError("grad() on a tensor that does not require gradients");
    TensorOps::ensure_grad(n.get());
    return n->grad;
}

void Tensor::zero_grad() {
    auto n = TensorOps::node(*this);
    if (n->requires_grad) n->grad.assign(n->data.size(), 0.0);
}

double Tensor::value() const {
    auto n = TensorOps::node(*this);
    if (n->data.size() != 1) throw ContractError("value() requires a scalar, got " + shape_str(n->shape));
    return n->data[0];
}

double Tensor::at(std::size_t i) const {
    auto n = TensorOps::node(*this);
    return n->data.at(i);
}

double Tensor::at(std::size_t i, std::size_t j) const {
    auto n = TensorOps::node(*this);
    if (n->shape.size() != 2) throw DimensionError("at(i,j) requires a 2-D tensor");
    return n->data.at(i * n->shape[1] + j);
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    auto n = TensorOps::node(*this);
    if (n->shape.size() != 3) throw DimensionError("at(i,j,k) requires a 3-D tensor");
    return n->data.at((i * n->shape[1] + j) * n->shape[2] + k);
}

const void* Tensor::id() const { return node_.get(); }

void TensorOps::backward(const std::shared_ptr<Node>& root) {
    if (root->data.size() != 1) {
        throw ContractError("backward requires a scalar loss, got " + shape_str(root->shape));
    }
    if (!root->requires_grad) return;  // nothing tracked upstream

    // Iterative post-order DFS over grad-requiring parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    ensure_grad(root.get());
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            for (const auto& p : n->parents) {
                if (p->requires_grad) ensure_grad(p.get());
            }
            n->backprop();
        }
    }
    // Release the tape; leaves keep their accumulated gradients.
    for (Node* n : order) {
        if (!n->leaf) {
            n->backprop = nullptr;
            n->parents.clear();
        }
    }
}

void Tensor::backward() const { TensorOps::backward(TensorOps::node(*this)); }

// ---- op helpers ----------------------------------------------------------

namespace {

using Node = Tensor::Node;

void check_same_shape(const char* op, const Node& a, const Node& b) {
    if (a.shape != b.shape) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
}

void count_flops(std::uint64_t n) {
    if (flops::enabled()) flops::add(n);
}

}  // namespace

// ---- matmul / transpose ---------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    auto a = TensorOps::node(ta);
    auto b = TensorOps::node(tb);
    if (a->shape.size() != 2 || b->shape.size() != 2) {
        throw DimensionError("matmul: expects 2-D operands, got " + shape_str(a->shape) + " and " +
                             shape_str(b->shape));
    }
    const std::size_t m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a->shape) +
                             " . " + shape_str(b->shape));
    }
    std::vector<double> out(m * n, 0.0);
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    // i-k-j ordering keeps both B and the output row contiguous.
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            const double* brow = bd + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    count_flops(2ull * m * k * n);

    Node* ap = a.get();
    Node* bp = b.get();
    auto result = TensorOps::make_op(
        Shape{m, n}, std::move(out), {a, b}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, bp, rp, m, k, n]() {
            const double* g = rp->grad.data();
            if (ap->requires_grad) {
                double* ga = ap->grad.data();
                const double* bd = bp->data.data();
                // dA = dC . B^T
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        const double* grow = g + i * n;
                        const double* brow = bd + kk * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + kk] += acc;
                    }
                }
            }
            if (bp->requires_grad) {
                double* gb = bp->grad.data();
                const double* ad = ap->data.data();
                // dB = A^T . dC
                for (std::size_t kk = 0; kk < k; ++kk) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double av = ad[i * k + kk];
                        const double* grow = g + i * n;
                        double* brow = gb + kk * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
                }
            }
        };
    }
    return result;
}

Tensor transpose(const Tensor& ta) {
    auto a = TensorOps::node(ta);
    if (a->shape.size() != 2) throw DimensionError("transpose: expects 2-D, got " + shape_str(a->shape));
    const std::size_t m = a->shape[0], n = a->shape[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a->data[i * n + j];

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{n, m}, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, m, n]() {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ap->grad[i * n + j] += rp->grad[j * m + i];
        };
    }
    return result;
}

// ---- elementwise -----------------------------------------------------------

namespace {

enum class Bin { add, sub, mul };

Tensor binary_op(const char* name, Bin kind, const Tensor& ta, const Tensor& tb) {
    auto a = TensorOps::node(ta);
    auto b = TensorOps::node(tb);
    check_same_shape(name, *a, *b);
    const std::size_t n = a->data.size();
    std::vector<double> out(n);
    switch (kind) {
        case Bin::add:
            for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] + b->data[i];
            break;
        case Bin::sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] - b->data[i];
            break;
        case Bin::mul:
            for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] * b->data[i];
            break;
    }
    count_flops(n);

    Node* ap = a.get();
    Node* bp = b.get();
    auto result = TensorOps::make_op(a->shape, std::move(out), {a, b}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, bp, rp, kind, n]() {
            const double* g = rp->grad.data();
            switch (kind) {
                case Bin::add:
                    if (ap->requires_grad)
                        for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g[i];
                    if (bp->requires_grad)
                        for (std::size_t i = 0; i < n; ++i) bp->grad[i] += g[i];
                    break;
                case Bin::sub:
                    if (ap->requires_grad)
                        for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g[i];
                    if (bp->requires_grad)
                        for (std::size_t i = 0; i < n; ++i) bp->grad[i] -= g[i];
                    break;
                case Bin::mul:
                    if (ap->requires_grad)
                        for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g[i] * bp->data[i];
                    if (bp->requires_grad)
                        for (std::size_t i = 0; i < n; ++i) bp->grad[i] += g[i] * ap->data[i];
                    break;
            }
        };
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", Bin::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", Bin::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", Bin::mul, a, b); }

Tensor scale(const Tensor& ta, double s) {
    auto a = TensorOps::node(ta);
    const std::size_t n = a->data.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] * s;
    count_flops(n);

    Node* ap = a.get();
    auto result = TensorOps::make_op(a->shape, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, s, n]() {
            for (std::size_t i = 0; i < n; ++i) ap->grad[i] += rp->grad[i] * s;
        };
    }
    return result;
}

Tensor mul_scalar(const Tensor& ta, const Tensor& ts) {
    auto a = TensorOps::node(ta);
    auto s = TensorOps::node(ts);
    if (s->data.size() != 1) {
        throw DimensionError("mul_scalar: scale must be a scalar, got " + shape_str(s->shape));
    }
    const std::size_t n = a->data.size();
    const double sv = s->data[0];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] * sv;
    count_flops(n);

    Node* ap = a.get();
    Node* sp = s.get();
    auto result = TensorOps::make_op(a->shape, std::move(out), {a, s}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, sp, rp, n]() {
            const double* g = rp->grad.data();
            const double sv = sp->data[0];
            if (ap->requires_grad) {
                for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g[i] * sv;
            }
            if (sp->requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[i] * ap->data[i];
                sp->grad[0] += acc;
            }
        };
    }
    return result;
}

namespace {

enum class Unary { tanh, sigmoid, relu };

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor unary_op(Unary kind, const Tensor& ta) {
    auto a = TensorOps::node(ta);
    const std::size_t n = a->data.size();
    std::vector<double> out(n);
    switch (kind) {
        case Unary::tanh:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a->data[i]);
            break;
        case Unary::sigmoid:
            for (std::size_t i = 0; i < n; ++i) out[i] = stable_sigmoid(a->data[i]);
            break;
        case Unary::relu:
            for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
            break;
    }
    count_flops(n);

    Node* ap = a.get();
    auto result = TensorOps::make_op(a->shape, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, kind, n]() {
            const double* g = rp->grad.data();
            const double* y = rp->data.data();
            switch (kind) {
                case Unary::tanh:
                    for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g[i] * (1.0 - y[i] * y[i]);
                    break;
                case Unary::sigmoid:
                    for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g[i] * y[i] * (1.0 - y[i]);
                    break;
                case Unary::relu:
                    for (std::size_t i = 0; i < n; ++i)
                        if (ap->data[i] > 0.0) ap->grad[i] += g[i];
                    break;
            }
        };
    }
    return result;
}

}  // namespace

Tensor tanh(const Tensor& a) { return unary_op(Unary::tanh, a); }
Tensor sigmoid(const Tensor& a) { return unary_op(Unary::sigmoid, a); }
Tensor relu(const Tensor& a) { return unary_op(Unary::relu, a); }

// ---- softmax / cross-entropy ----------------------------------------------

namespace {

// Writes softmax of `n` strided values into out (same stride layout).
void softmax_1d(const double* x, double* out, std::size_t n, std::size_t stride) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = std::exp(x[i * stride] - mx);
        out[i * stride] = e;
        z += e;
    }
    for (std::size_t i = 0; i < n; ++i) out[i * stride] /= z;
}

}  // namespace

Tensor softmax(const Tensor& ta, int axis) {
    auto a = TensorOps::node(ta);
    const Shape& shape = a->shape;
    if (shape.size() != 1 && shape.size() != 2) {
        throw DimensionError("softmax: supports 1-D and 2-D tensors, got " + shape_str(shape));
    }
    std::size_t ax;
    if (axis < 0) {
        ax = shape.size() - 1;
    } else {
        ax = static_cast<std::size_t>(axis);
        if (ax >= shape.size()) throw DimensionError("softmax: axis out of range for " + shape_str(shape));
    }
    if (shape[ax] == 0) throw DimensionError("softmax: empty axis in " + shape_str(shape));

    std::vector<double> out(a->data.size());
    std::size_t vectors, len, stride, step;
    if (shape.size() == 1) {
        vectors = 1;
        len = shape[0];
        stride = 1;
        step = 0;
    } else if (ax == 1) {
        vectors = shape[0];
        len = shape[1];
        stride = 1;
        step = shape[1];
    } else {
        vectors = shape[1];
        len = shape[0];
        stride = shape[1];
        step = 1;
    }
    for (std::size_t v = 0; v < vectors; ++v) {
        softmax_1d(a->data.data() + v * step, out.data() + v * step, len, stride);
    }
    count_flops(4ull * vectors * len);

    Node* ap = a.get();
    auto result = TensorOps::make_op(shape, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, vectors, len, stride, step]() {
            // dx_i = y_i * (g_i - sum_j g_j y_j)
            for (std::size_t v = 0; v < vectors; ++v) {
                const double* y = rp->data.data() + v * step;
                const double* g = rp->grad.data() + v * step;
                double dot = 0.0;
                for (std::size_t i = 0; i < len; ++i) dot += g[i * stride] * y[i * stride];
                double* dx = ap->grad.data() + v * step;
                for (std::size_t i = 0; i < len; ++i)
                    dx[i * stride] += y[i * stride] * (g[i * stride] - dot);
            }
        };
    }
    return result;
}

Tensor cross_entropy(const Tensor& tlogits, std::size_t target) {
    auto z = TensorOps::node(tlogits);
    if (z->shape.size() != 1) {
        throw DimensionError("cross_entropy: expects a 1-D logit vector, got " + shape_str(z->shape));
    }
    const std::size_t c = z->shape[0];
    if (target >= c) {
        throw LabelError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                         std::to_string(c) + " classes");
    }
    double mx = z->data[0];
    for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, z->data[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < c; ++i) total += std::exp(z->data[i] - mx);
    const double loss = mx + std::log(total) - z->data[target];
    count_flops(3ull * c + 2);

    Node* zp = z.get();
    auto result = TensorOps::make_op(Shape{1}, {loss}, {z}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [zp, rp, c, target, mx, total]() {
            const double g = rp->grad[0];
            for (std::size_t i = 0; i < c; ++i) {
                double p = std::exp(zp->data[i] - mx) / total;
                zp->grad[i] += g * (p - (i == target ? 1.0 : 0.0));
            }
        };
    }
    return result;
}

// ---- conv1d ----------------------------------------------------------------

Tensor conv1d(const Tensor& tx, const Tensor& tkernel, const Tensor& tbias,
              std::size_t stride, std::size_t padding) {
    auto x = TensorOps::node(tx);
    auto k = TensorOps::node(tkernel);
    auto b = TensorOps::node(tbias);
    Shape xshape = x->shape;
    if (xshape.size() == 1) xshape = Shape{1, xshape[0]};
    if (xshape.size() != 2) {
        throw DimensionError("conv1d: input must be 1-D or 2-D, got " + shape_str(x->shape));
    }
    if (k->shape.size() != 3) {
        throw DimensionError("conv1d: kernel must be [out x in x k], got " + shape_str(k->shape));
    }
    const std::size_t c_in = xshape[0], len = xshape[1];
    const std::size_t c_out = k->shape[0], kc_in = k->shape[1], ksize = k->shape[2];
    if (kc_in != c_in) {
        throw DimensionError("conv1d: kernel expects " + std::to_string(kc_in) + " channels, input has " +
                             std::to_string(c_in));
    }
    if (b->shape.size() != 1 || b->shape[0] != c_out) {
        throw DimensionError("conv1d: bias must be [" + std::to_string(c_out) + "], got " +
                             shape_str(b->shape));
    }
    if (stride == 0) throw DimensionError("conv1d: stride must be positive");
    if (len + 2 * padding < ksize) {
        throw DimensionError("conv1d: kernel size " + std::to_string(ksize) +
                             " exceeds padded length " + std::to_string(len + 2 * padding));
    }
    const std::size_t out_len = (len + 2 * padding - ksize) / stride + 1;

    std::vector<double> out(c_out * out_len, 0.0);
    for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t o = 0; o < out_len; ++o) {
            double acc = b->data[co];
            const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * stride) -
                                         static_cast<std::ptrdiff_t>(padding);
            for (std::size_t ci = 0; ci < c_in; ++ci) {
                for (std::size_t t = 0; t < ksize; ++t) {
                    const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(t);
                    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
                    acc += k->data[(co * c_in + ci) * ksize + t] * x->data[ci * len + pos];
                }
            }
            out[co * out_len + o] = acc;
        }
    }
    count_flops(2ull * c_out * out_len * c_in * ksize + c_out * out_len);

    Node* xp = x.get();
    Node* kp = k.get();
    Node* bp = b.get();
    auto result = TensorOps::make_op(Shape{c_out, out_len}, std::move(out), {x, k, b}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [xp, kp, bp, rp, c_in, len, c_out, ksize, out_len, stride, padding]() {
            for (std::size_t co = 0; co < c_out; ++co) {
                for (std::size_t o = 0; o < out_len; ++o) {
                    const double g = rp->grad[co * out_len + o];
                    if (g == 0.0) continue;
                    if (bp->requires_grad) bp->grad[co] += g;
                    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * stride) -
                                                 static_cast<std::ptrdiff_t>(padding);
                    for (std::size_t ci = 0; ci < c_in; ++ci) {
                        for (std::size_t t = 0; t < ksize; ++t) {
                            const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(t);
                            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
                            if (kp->requires_grad)
                                kp->grad[(co * c_in + ci) * ksize + t] += g * xp->data[ci * len + pos];
                            if (xp->requires_grad)
                                xp->grad[ci * len + pos] += g * kp->data[(co * c_in + ci) * ksize + t];
                        }
                    }
                }
            }
        };
    }
    return result;
}

// ---- linear ----------------------------------------------------------------

Tensor linear(const Tensor& tx, const Tensor& tweight, const Tensor& tbias) {
    auto x = TensorOps::node(tx);
    auto w = TensorOps::node(tweight);
    auto b = TensorOps::node(tbias);
    if (w->shape.size() != 2) {
        throw DimensionError("linear: weight must be [out x in], got " + shape_str(w->shape));
    }
    const std::size_t out_dim = w->shape[0], in_dim = w->shape[1];
    const bool vector_input = x->shape.size() == 1;
    if (!vector_input && x->shape.size() != 2) {
        throw DimensionError("linear: input must be 1-D or 2-D, got " + shape_str(x->shape));
    }
    const std::size_t rows = vector_input ? 1 : x->shape[0];
    const std::size_t cols = vector_input ? x->shape[0] : x->shape[1];
    if (cols != in_dim) {
        throw DimensionError("linear: input " + shape_str(x->shape) + " incompatible with weight " +
                             shape_str(w->shape));
    }
    if (b->shape.size() != 1 || b->shape[0] != out_dim) {
        throw DimensionError("linear: bias must be [" + std::to_string(out_dim) + "], got " +
                             shape_str(b->shape));
    }

    std::vector<double> out(rows * out_dim);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x->data.data() + r * in_dim;
        double* orow = out.data() + r * out_dim;
        for (std::size_t o = 0; o < out_dim; ++o) orow[o] = b->data[o];
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double xv = xr[i];
            if (xv == 0.0) continue;
            const double* wcol = w->data.data();
            for (std::size_t o = 0; o < out_dim; ++o) orow[o] += wcol[o * in_dim + i] * xv;
        }
    }
    count_flops(2ull * rows * in_dim * out_dim + rows * out_dim);

    Shape out_shape = vector_input ? Shape{out_dim} : Shape{rows, out_dim};
    Node* xp = x.get();
    Node* wp = w.get();
    Node* bp = b.get();
    auto result = TensorOps::make_op(std::move(out_shape), std::move(out), {x, w, b}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [xp, wp, bp, rp, rows, in_dim, out_dim]() {
            const double* g = rp->grad.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = g + r * out_dim;
                const double* xrow = xp->data.data() + r * in_dim;
                if (bp->requires_grad) {
                    for (std::size_t o = 0; o < out_dim; ++o) bp->grad[o] += grow[o];
                }
                if (wp->requires_grad) {
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        const double gv = grow[o];
                        if (gv == 0.0) continue;
                        double* wrow = wp->grad.data() + o * in_dim;
                        for (std::size_t i = 0; i < in_dim; ++i) wrow[i] += gv * xrow[i];
                    }
                }
                if (xp->requires_grad) {
                    double* dx = xp->grad.data() + r * in_dim;
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        const double gv = grow[o];
                        if (gv == 0.0) continue;
                        const double* wrow = wp->data.data() + o * in_dim;
                        for (std::size_t i = 0; i < in_dim; ++i) dx[i] += gv * wrow[i];
                    }
                }
            }
        };
    }
    return result;
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& ta) {
    auto a = TensorOps::node(ta);
    double acc = 0.0;
    for (double v : a->data) acc += v;
    count_flops(a->data.size());
    const std::size_t n = a->data.size();

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{1}, {acc}, {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, n]() {
            const double g = rp->grad[0];
            for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g;
        };
    }
    return result;
}

Tensor mean(const Tensor& ta) {
    auto a = TensorOps::node(ta);
    if (a->data.empty()) throw DimensionError("mean: empty tensor");
    double acc = 0.0;
    for (double v : a->data) acc += v;
    const std::size_t n = a->data.size();
    acc /= static_cast<double>(n);
    count_flops(n + 1);

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{1}, {acc}, {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, n]() {
            const double g = rp->grad[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) ap->grad[i] += g;
        };
    }
    return result;
}

// ---- data movement ----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat: no parts");
    std::vector<std::shared_ptr<Node>> nodes;
    std::size_t total = 0;
    for (const auto& p : parts) {
        auto n = TensorOps::node(p);
        if (n->shape.size() != 1) {
            throw DimensionError("concat: expects 1-D parts, got " + shape_str(n->shape));
        }
        total += n->data.size();
        nodes.push_back(std::move(n));
    }
    std::vector<double> out;
    out.reserve(total);
    for (const auto& n : nodes) out.insert(out.end(), n->data.begin(), n->data.end());

    std::vector<Node*> raw;
    for (const auto& n : nodes) raw.push_back(n.get());
    auto result = TensorOps::make_op(Shape{total}, std::move(out),
                                     std::vector<std::shared_ptr<Node>>(nodes.begin(), nodes.end()),
                                     nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [raw, rp]() {
            std::size_t off = 0;
            for (Node* p : raw) {
                if (p->requires_grad) {
                    for (std::size_t i = 0; i < p->data.size(); ++i) p->grad[i] += rp->grad[off + i];
                }
                off += p->data.size();
            }
        };
    }
    return result;
}

Tensor reshape(const Tensor& ta, Shape shape) {
    auto a = TensorOps::node(ta);
    if (shape_size(shape) != a->data.size()) {
        throw DimensionError("reshape: " + shape_str(a->shape) + " to " + shape_str(shape) +
                             " changes element count");
    }
    Node* ap = a.get();
    auto result = TensorOps::make_op(std::move(shape), a->data, {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp]() {
            for (std::size_t i = 0; i < ap->data.size(); ++i) ap->grad[i] += rp->grad[i];
        };
    }
    return result;
}

Tensor row(const Tensor& ta, std::size_t i) {
    auto a = TensorOps::node(ta);
    if (a->shape.size() != 2) throw DimensionError("row: expects 2-D, got " + shape_str(a->shape));
    if (i >= a->shape[0]) throw DimensionError("row: index out of range");
    const std::size_t d = a->shape[1];
    std::vector<double> out(a->data.begin() + i * d, a->data.begin() + (i + 1) * d);

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{d}, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, i, d]() {
            for (std::size_t j = 0; j < d; ++j) ap->grad[i * d + j] += rp->grad[j];
        };
    }
    return result;
}

Tensor slice_rows(const Tensor& ta, std::size_t r0, std::size_t r1) {
    auto a = TensorOps::node(ta);
    if (a->shape.size() != 2) throw DimensionError("slice_rows: expects 2-D, got " + shape_str(a->shape));
    if (r0 > r1 || r1 > a->shape[0]) throw DimensionError("slice_rows: bad range");
    const std::size_t d = a->shape[1];
    std::vector<double> out(a->data.begin() + r0 * d, a->data.begin() + r1 * d);

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{r1 - r0, d}, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, r0, d]() {
            for (std::size_t i = 0; i < rp->data.size(); ++i) ap->grad[r0 * d + i] += rp->grad[i];
        };
    }
    return result;
}

Tensor gather_rows(const Tensor& ta, const std::vector<std::size_t>& order) {
    auto a = TensorOps::node(ta);
    if (a->shape.size() != 2) throw DimensionError("gather_rows: expects 2-D, got " + shape_str(a->shape));
    const std::size_t d = a->shape[1];
    std::vector<double> out(order.size() * d);
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (order[r] >= a->shape[0]) throw DimensionError("gather_rows: index out of range");
        std::copy_n(a->data.begin() + order[r] * d, d, out.begin() + r * d);
    }

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{order.size(), d}, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        auto ord = order;
        rn->backprop = [ap, rp, ord, d]() {
            for (std::size_t r = 0; r < ord.size(); ++r)
                for (std::size_t j = 0; j < d; ++j) ap->grad[ord[r] * d + j] += rp->grad[r * d + j];
        };
    }
    return result;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no rows");
    std::vector<std::shared_ptr<Node>> nodes;
    const std::size_t d = TensorOps::node(rows[0])->data.size();
    for (const auto& r : rows) {
        auto n = TensorOps::node(r);
        if (n->shape.size() != 1 || n->data.size() != d) {
            throw DimensionError("stack_rows: rows must be 1-D of equal length");
        }
        nodes.push_back(std::move(n));
    }
    std::vector<double> out;
    out.reserve(nodes.size() * d);
    for (const auto& n : nodes) out.insert(out.end(), n->data.begin(), n->data.end());

    std::vector<Node*> raw;
    for (const auto& n : nodes) raw.push_back(n.get());
    auto result = TensorOps::make_op(Shape{nodes.size(), d}, std::move(out),
                                     std::vector<std::shared_ptr<Node>>(nodes.begin(), nodes.end()),
                                     nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [raw, rp, d]() {
            for (std::size_t r = 0; r < raw.size(); ++r) {
                if (!raw[r]->requires_grad) continue;
                for (std::size_t j = 0; j < d; ++j) raw[r]->grad[j] += rp->grad[r * d + j];
            }
        };
    }
    return result;
}

Tensor pad_to(const Tensor& ta, std::size_t len) {
    auto a = TensorOps::node(ta);
    if (a->shape.size() != 1) throw DimensionError("pad_to: expects 1-D, got " + shape_str(a->shape));
    const std::size_t n = a->data.size();
    std::vector<double> out(len, 0.0);
    const std::size_t kept = std::min(n, len);
    std::copy_n(a->data.begin(), kept, out.begin());

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{len}, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, kept]() {
            for (std::size_t i = 0; i < kept; ++i) ap->grad[i] += rp->grad[i];
        };
    }
    return result;
}

// ---- columnwise pooling -------------------------------------------------------

Tensor colwise_max(const Tensor& ta) {
    auto a = TensorOps::node(ta);
    if (a->shape.size() != 2) throw DimensionError("colwise_max: expects 2-D, got " + shape_str(a->shape));
    const std::size_t n = a->shape[0], d = a->shape[1];
    if (n == 0) throw DimensionError("colwise_max: empty tensor");
    std::vector<double> out(d);
    std::vector<std::size_t> argmax(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        double best = a->data[j];
        std::size_t bi = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (a->data[i * d + j] > best) {
                best = a->data[i * d + j];
                bi = i;
            }
        }
        out[j] = best;
        argmax[j] = bi;
    }
    count_flops(static_cast<std::uint64_t>(n) * d);

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{d}, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, argmax, d]() {
            for (std::size_t j = 0; j < d; ++j) ap->grad[argmax[j] * d + j] += rp->grad[j];
        };
    }
    return result;
}

Tensor colwise_mean(const Tensor& ta) {
    auto a = TensorOps::node(ta);
    if (a->shape.size() != 2) throw DimensionError("colwise_mean: expects 2-D, got " + shape_str(a->shape));
    const std::size_t n = a->shape[0], d = a->shape[1];
    if (n == 0) throw DimensionError("colwise_mean: empty tensor");
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += a->data[i * d + j];
    for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
    count_flops(static_cast<std::uint64_t>(n) * d + d);

    Node* ap = a.get();
    auto result = TensorOps::make_op(Shape{d}, std::move(out), {a}, nullptr);
    auto rn = TensorOps::node(result);
    Node* rp = rn.get();
    if (rn->requires_grad) {
        rn->backprop = [ap, rp, n, d]() {
            const double inv = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) ap->grad[i * d + j] += rp->grad[j] * inv;
        };
    }
    return result;
}

}  // namespace decompl
