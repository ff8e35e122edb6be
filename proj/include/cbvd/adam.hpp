#pragma once

#include "cbvd/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace cbvd {

template <class S>
struct Parameter {
    std::string name;
    Tensor<S> tensor;
};

template <class S>
using ParameterList = std::vector<Parameter<S>>;

template <class S>
struct AdamState {
    std::uint64_t step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Moments are parallel to the parameter list they were created for.
    std::vector<typename Tensor<S>::Array> m;
    std::vector<typename Tensor<S>::Array> v;
};

template <class S>
AdamState<S> make_adam_state(const ParameterList<S>& params, double lr)
{
    AdamState<S> state;
    state.lr = lr;
    for (const auto& p : params) {
        state.m.push_back(Tensor<S>::Array::Zero(p.tensor.size()));
        state.v.push_back(Tensor<S>::Array::Zero(p.tensor.size()));
    }
    return state;
}

/// One bias-corrected Adam update. Consumes (clears) the gradients.
template <class S>
void adam_step(ParameterList<S>& params, AdamState<S>& state)
{
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ContractError("adam_step: state holds " + std::to_string(state.m.size()) + " moments for "
                            + std::to_string(params.size()) + " parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        if (!p.tensor.has_grad())
            throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
        if (state.m[i].size() != p.tensor.size() || state.v[i].size() != p.tensor.size())
            throw ContractError("adam_step: moment shape mismatch for '" + p.name + "'");
    }

    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const S b1 = S(state.beta1), b2 = S(state.beta2);
    const S step = S(state.lr / (1.0 - std::pow(state.beta1, t)));
    const S v_correction = S(1.0 / (1.0 - std::pow(state.beta2, t)));
    const S eps = S(state.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& tensor = params[i].tensor;
        const auto& g = tensor.grad();
        state.m[i] = b1 * state.m[i] + (S(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (S(1) - b2) * g.square();
        tensor.values() -= step * state.m[i] / ((state.v[i] * v_correction).sqrt() + eps);
        tensor.clear_grad();
    }
}

} // namespace cbvd
