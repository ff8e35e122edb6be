#pragma once

#include "cbvd/ops.hpp"

namespace cbvd {

/**
 * Joint loss of the first stage:
 *   mean|denoised - center| + lambda1 * (1/B) sum_t mean|F_t^c - I_t|
 * `features` is [B, C_feat, H, W], `noisy_window` the matching [B, C_in, H, W]
 * frames, and F_t^c the C_in channels starting at `central_begin`. Every
 * frame term has the same element count, so the per-frame average equals one
 * mean over the whole window.
 */
template <class S>
Tensor<S> stage1_loss(const Tensor<S>& denoised, const Tensor<S>& center, const Tensor<S>& features,
                      const Tensor<S>& noisy_window, S lambda1, Index central_begin)
{
    if (noisy_window.rank() != 4 || features.rank() != 4 || noisy_window.dim(0) != features.dim(0))
        throw ShapeError("stage1_loss: features " + to_string(features.shape()) + " and noisy window "
                         + to_string(noisy_window.shape()) + " disagree");
    const Tensor<S> fidelity = l1_loss(denoised, center);
    const Tensor<S> feature_term = l1_loss(slice_channels(features, central_begin, noisy_window.dim(1)), noisy_window);
    return add(fidelity, scale(feature_term, lambda1));
}

/// lambda2 * mean|refined - center| + lambda3 * mean|refined - denoised|.
template <class S>
Tensor<S> stage2_loss(const Tensor<S>& refined, const Tensor<S>& center, const Tensor<S>& denoised, S lambda2, S lambda3)
{
    return add(scale(l1_loss(refined, center), lambda2), scale(l1_loss(refined, denoised), lambda3));
}

} // namespace cbvd
