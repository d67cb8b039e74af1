#pragma once

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include <algorithm>
#include <functional>

namespace aif::testing {

/// Central finite differences of a scalar function of `x`, one element at a time.
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                      double h = 1e-5) {
    auto base = x.detach().clone().to(torch::kDouble).contiguous();
    auto grad = torch::zeros_like(base);
    auto flat = base.view({-1});
    auto g = grad.view({-1});
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = f(base);
        flat[i] = orig - h;
        const double down = f(base);
        flat[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// ||a - n|| / max(||a||, ||n||, tiny).
inline double relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric) {
    const double diff = (analytic.to(torch::kDouble) - numeric).norm().item<double>();
    const double scale = std::max({analytic.norm().item<double>(), numeric.norm().item<double>(), 1e-12});
    return diff / scale;
}

/// Autograd gradient of a scalar-valued f at x (double precision).
inline torch::Tensor analytic_gradient(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                       const torch::Tensor& x) {
    auto v = x.detach().clone().to(torch::kDouble).set_requires_grad(true);
    f(v).backward();
    return v.grad().detach().clone();
}

/// Relative error between autograd and central differences for f at x.
inline double gradient_check(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                             double h = 1e-5) {
    const auto analytic = analytic_gradient(f, x);
    const auto numeric = numeric_gradient(
        [&](const torch::Tensor& v) {
            torch::NoGradGuard no_grad;
            return f(v).item<double>();
        },
        x, h);
    return relative_error(analytic, numeric);
}

inline torch::Generator seeded(std::uint64_t seed) {
    return at::make_generator<at::CPUGeneratorImpl>(seed);
}

}  // namespace aif::testing
