#pragma once

#include <functional>
#include <vector>

#include "gff/tensor.hpp"

namespace gff {

/// Compares the recorded gradient of a scalar-valued function against central
/// finite differences. Returns the max over coordinates of
/// |analytic - numeric| / max(1, |analytic|). `f` is re-run per perturbed
/// coordinate; it must be a pure function of x's current values.
template <typename S>
double grad_check(const std::function<Tensor<S>(const Tensor<S>&)>& f, Tensor<S>& x, double h) {
    if (!(h > 0)) throw ContractError("grad_check: h must be positive");
    const bool had_requires = x.requires_grad();
    x.set_requires_grad(true);
    x.zero_grad();
    {
        Tape<S> tape;
        Tensor<S> loss = f(x);
        if (loss.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
        tape.backward(loss);
    }
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    x.clear_grad();
    x.set_requires_grad(had_requires);

    double max_rel = 0.0;
    auto vals = x.data_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const S orig = vals[i];
        vals[i] = orig + S(h);
        const double up = static_cast<double>(f(x).item());
        vals[i] = orig - S(h);
        const double dn = static_cast<double>(f(x).item());
        vals[i] = orig;
        const double numeric = (up - dn) / (2.0 * h);
        const double rel = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace gff
