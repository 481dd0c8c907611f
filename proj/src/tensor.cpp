#include "solo/tensor.hpp"

#include <stdexcept>

namespace solo {

std::size_t numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

namespace {

// Entries capture their output handle, which keeps intermediates alive until
// the backward pass consumes them.
template <typename T>
std::vector<std::function<void()>>& thread_tape()
{
    thread_local std::vector<std::function<void()>> tape;
    return tape;
}

bool& grad_mode_flag()
{
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace

bool GradMode::enabled() { return grad_mode_flag(); }
void GradMode::set_enabled(bool value) { grad_mode_flag() = value; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

template <typename T>
Tensor<T>::Tensor() : impl_(std::make_shared<detail::TensorImpl<T>>())
{
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>())
{
    if (shape.size() > 4) {
        throw std::invalid_argument("tensor rank " + std::to_string(shape.size()) + " exceeds 4");
    }
    // A zero leading extent is allowed (e.g. an empty channel block).
    for (std::size_t axis = 1; axis < shape.size(); ++axis) {
        if (shape[axis] == 0) {
            throw std::invalid_argument("tensor axis " + std::to_string(axis) + " has zero extent");
        }
    }
    if (numel(shape) != data.size()) {
        throw std::invalid_argument("shape " + shape_string(shape) + " needs " +
                                    std::to_string(numel(shape)) + " values, got " +
                                    std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad)
{
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad)
{
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad)
{
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const
{
    if (axis >= impl_->shape.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " +
                                shape_string(impl_->shape));
    }
    return impl_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const
{
    if (impl_->data.size() != 1) {
        throw std::invalid_argument("item() on tensor of shape " + shape_string(impl_->shape));
    }
    return impl_->data[0];
}

template <typename T>
void Tensor<T>::accumulate_grad(std::span<const T> g) const
{
    auto& grad = impl_->grad;
    if (g.size() != impl_->data.size()) {
        throw std::logic_error("gradient size mismatch for shape " + shape_string(impl_->shape));
    }
    if (grad.empty()) {
        grad.assign(g.begin(), g.end());
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const
{
    return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

template <typename T>
Tensor<T> record_op(Shape shape, std::vector<T> values, std::initializer_list<Tensor<T>> inputs,
                    BackwardFn<T> backward_fn)
{
    bool track = false;
    if (GradMode::enabled()) {
        for (const auto& input : inputs) track = track || input.requires_grad();
    }
    Tensor<T> out(std::move(shape), std::move(values), track);
    if (track) {
        thread_tape<T>().push_back([out, fn = std::move(backward_fn)] {
            if (out.has_grad()) fn(out.grad());
        });
    }
    return out;
}

template <typename T>
void backward(const Tensor<T>& loss)
{
    if (loss.size() != 1) {
        throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                    shape_string(loss.shape()));
    }
    auto& tape = thread_tape<T>();
    loss.accumulate_grad(std::vector<T>{T(1)});
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) (*it)();
    tape.clear();
}

template <typename T>
void clear_tape()
{
    thread_tape<T>().clear();
}

template <typename T>
std::size_t tape_size()
{
    return thread_tape<T>().size();
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> record_op(Shape, std::vector<float>, std::initializer_list<Tensor<float>>,
                                 BackwardFn<float>);
template Tensor<double> record_op(Shape, std::vector<double>, std::initializer_list<Tensor<double>>,
                                  BackwardFn<double>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template void clear_tape<float>();
template void clear_tape<double>();
template std::size_t tape_size<float>();
template std::size_t tape_size<double>();

}  // namespace solo
