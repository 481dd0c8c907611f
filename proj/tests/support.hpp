#pragma once

// Test-only oracles: central finite differences and seeded generators. Nothing
// here calls into the code paths it is used to check, beyond evaluating the
// forward function being differentiated.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "solo/ops.hpp"
#include "solo/tensor.hpp"

namespace solo::testing {

inline double rel_error(double a, double b, double floor = 1e-8)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

/// Uniform in [-hi,-lo] U [lo,hi].
inline std::vector<double> uniform_away_from_zero(std::mt19937_64& rng, std::size_t n, double lo,
                                                  double hi)
{
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(n);
    for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
    return v;
}

/// Central-difference gradient of `f` with respect to every element of `x`.
/// `f` must recompute its value from x's current contents.
inline std::vector<double> numeric_grad(Tensor<double>& x, const std::function<double()>& f,
                                        double step = 1e-3)
{
    auto data = x.mutable_data();
    std::vector<double> g(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double saved = data[i];
        data[i] = saved + step;
        const double up = f();
        data[i] = saved - step;
        const double down = f();
        data[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

inline double max_rel_error(std::span<const double> analytic, const std::vector<double>& numeric,
                            double floor = 1e-8)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        worst = std::max(worst, rel_error(analytic[i], numeric[i], floor));
    }
    return worst;
}


template <typename T>
Tensor<T> random_tensor(std::mt19937_64& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                        bool requires_grad = false)
{
    auto values = uniform(rng, numel(shape), lo, hi);
    return Tensor<T>(std::move(shape), std::vector<T>(values.begin(), values.end()), requires_grad);
}

// Checks d(sum(f(inputs) * R))/d(inputs) against central differences and
// returns the worst per-element relative error.
inline double op_gradient_error(std::vector<Tensor<double>> inputs,
                                const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                std::mt19937_64& rng)
{
    for (auto& t : inputs) t.set_requires_grad(true);
    auto out = f(inputs);
    // Projection weights bounded away from zero so no element's true gradient
    // is accidentally tiny relative to the difference truncation error.
    auto proj = uniform_away_from_zero(rng, out.size(), 0.5, 1.5);
    Tensor<double> r(out.shape(), proj);
    backward(ops::sum(ops::mul(out, r)));

    double worst = 0.0;
    for (auto& t : inputs) {
        if (!t.has_grad()) return std::numeric_limits<double>::infinity();
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto numeric = numeric_grad(t, [&] {
            NoGradGuard guard;
            auto y = f(inputs);
            double s = 0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * proj[i];
            return s;
        });
        worst = std::max(worst, max_rel_error(analytic, numeric));
    }
    return worst;
}

}  // namespace solo::testing
