#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace decompl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles with reverse-mode automatic
// differentiation. A Tensor is a cheap shared handle onto a node of the
// dynamically recorded tape; values are treated as immutable once created
// within a forward pass. backward() on a scalar accumulates exact gradients
// into every reachable leaf that requires them and then frees the tape.
class Tensor {
public:
    Tensor() = default;
    ~Tensor();
    Tensor(const Tensor&);
    Tensor(Tensor&&) noexcept;
    Tensor& operator=(const Tensor&);
    Tensor& operator=(Tensor&&) noexcept;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;
    bool requires_grad() const;

    // Gradient buffer; ContractError when the tensor does not track one.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    // Scalar read; ContractError on non-scalars.
    double value() const;

    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    // Reverse-mode sweep from a scalar loss. Gradients accumulate
    // additively into leaves; the recorded tape is released afterwards.
    void backward() const;

    // Stable identity of the underlying node (for diagnostics/tests).
    const void* id() const;

    struct Node;  // tape node; defined in tensor.cpp

private:
    explicit Tensor(std::shared_ptr<Node> node);
    std::shared_ptr<Node> node_;
    friend struct TensorOps;
};

// ---- operations ---------------------------------------------------------
// Every op checks shapes up front (DimensionError names both operands) and
// defines gradients for all differentiable inputs.

Tensor matmul(const Tensor& a, const Tensor& b);    // [m x k] . [k x n]
Tensor transpose(const Tensor& a);                  // 2-D

Tensor add(const Tensor& a, const Tensor& b);       // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, const Tensor& s);  // s is a scalar tensor

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

// Probability normalization along `axis` (1-D: the only axis; 2-D: rows
// when axis == 1, columns when axis == 0). Max-subtracted for overflow
// safety.
Tensor softmax(const Tensor& a, int axis = -1);

// -log softmax(logits)[target] for a 1-D logit vector.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

// Cross-correlation of x [c_in x len] (or 1-D, promoted to one channel)
// with kernel [c_out x c_in x k] plus per-channel bias, zero padding.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t padding);

// x [n x in] or [in] against weight [out x in] and bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor sum(const Tensor& a);         // scalar
Tensor mean(const Tensor& a);        // scalar

Tensor concat(const std::vector<Tensor>& parts);            // 1-D
Tensor reshape(const Tensor& a, Shape shape);
Tensor row(const Tensor& a, std::size_t i);                 // 2-D -> 1-D
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& order);
Tensor stack_rows(const std::vector<Tensor>& rows);         // k 1-D -> [k x d]
Tensor pad_to(const Tensor& a, std::size_t len);            // 1-D pad/truncate

Tensor colwise_max(const Tensor& a);    // [n x d] -> [d]
Tensor colwise_mean(const Tensor& a);   // [n x d] -> [d]

}  // namespace decompl
