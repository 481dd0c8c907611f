#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace solo {

/// Extents of a tensor, outermost first. At most four axes.
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass reaches this node
    bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major tensor with optional gradient tracking.
///
/// Copies share storage (handle semantics). Operations never mutate their
/// inputs; only the optimizer and initializers write through mutable_data().
template <typename T>
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    const Shape& shape() const { return impl_->shape; }
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    std::span<T> mutable_data() { return impl_->data; }
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool value) { impl_->requires_grad = value; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    /// Adds `g` into this tensor's gradient buffer, allocating it on first use.
    void accumulate_grad(std::span<const T> g) const;

    /// Deep copy with the same requires_grad flag and no gradient.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<detail::TensorImpl<T>> impl_;
};

/// Process-wide switch for tape recording. Inference runs with recording off.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool value);
};

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Receives the gradient of the op's output; accumulates into the inputs.
template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out)>;

/// Builds the output tensor of a differentiable op. When recording is on and
/// any input requires a gradient, the backward rule is appended to the
/// calling thread's tape and the output is marked as requiring a gradient.
template <typename T>
Tensor<T> record_op(Shape shape, std::vector<T> values,
                    std::initializer_list<Tensor<T>> inputs, BackwardFn<T> backward_fn);

/// Seeds d(loss)/d(loss) = 1, replays the tape in reverse and clears it.
/// Throws std::invalid_argument for a non-scalar loss.
template <typename T>
void backward(const Tensor<T>& loss);

/// Drops all recorded operations of this thread without running them.
template <typename T>
void clear_tape();

template <typename T>
std::size_t tape_size();

}  // namespace solo
