#pragma once

// Differentiable primitives used by the feature generator, the denoiser and
// the refine network. Every op works on row-major storage; image tensors are
// laid out [batch, channel, height, width].

#include "cbvd/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

namespace cbvd {

namespace detail {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowMap = Eigen::Map<RowMat<S>>;
template <class S>
using ConstRowMap = Eigen::Map<const RowMat<S>>;
template <class S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
typename TensorNode<S>::Array* grad_of(const std::shared_ptr<TensorNode<S>>& p)
{
    return p->requires_grad ? &p->ensure_grad() : nullptr;
}

inline void expect_rank(const Shape& s, std::size_t rank, const char* op, const char* what)
{
    if (s.size() != rank)
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got "
                         + to_string(s));
}

// Unfolds a [C,H,W] image into a (C*k*k, H*W) row-major patch matrix with zero padding.
template <class S>
void im2col(const S* img, Index channels, Index height, Index width, int k, S* cols)
{
    const int pad = k / 2;
    const Index hw = height * width;
    for (Index c = 0; c < channels; ++c) {
        const S* plane = img + c * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                S* row = cols + ((c * k + ky) * k + kx) * hw;
                const Index dy = ky - pad, dx = kx - pad;
                for (Index y = 0; y < height; ++y) {
                    S* dst = row + y * width;
                    const Index sy = y + dy;
                    if (sy < 0 || sy >= height) {
                        std::fill(dst, dst + width, S(0));
                        continue;
                    }
                    const S* src = plane + sy * width;
                    for (Index x = 0; x < width; ++x) {
                        const Index sx = x + dx;
                        dst[x] = (sx >= 0 && sx < width) ? src[sx] : S(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the image.
template <class S>
void col2im_add(const S* cols, Index channels, Index height, Index width, int k, S* img)
{
    const int pad = k / 2;
    const Index hw = height * width;
    for (Index c = 0; c < channels; ++c) {
        S* plane = img + c * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const S* row = cols + ((c * k + ky) * k + kx) * hw;
                const Index dy = ky - pad, dx = kx - pad;
                for (Index y = 0; y < height; ++y) {
                    const Index sy = y + dy;
                    if (sy < 0 || sy >= height)
                        continue;
                    const S* src = row + y * width;
                    S* dst = plane + sy * width;
                    for (Index x = 0; x < width; ++x) {
                        const Index sx = x + dx;
                        if (sx >= 0 && sx < width)
                            dst[sx] += src[x];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// Same-size 2-D convolution (cross-correlation) with zero padding, k in {1, 3}.
template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias)
{
    detail::expect_rank(input.shape(), 4, "conv2d", "input");
    detail::expect_rank(weight.shape(), 4, "conv2d", "weight");
    const Index batch = input.dim(0), cin = input.dim(1), height = input.dim(2), width = input.dim(3);
    const Index cout = weight.dim(0);
    const int k = static_cast<int>(weight.dim(2));
    if (weight.dim(1) != cin)
        throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, weight expects "
                         + std::to_string(weight.dim(1)));
    if (weight.dim(3) != k || (k != 1 && k != 3))
        throw ShapeError("conv2d: kernel must be 1x1 or 3x3, got " + to_string(weight.shape()));
    if (bias.shape() != Shape{cout})
        throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + " does not match " + std::to_string(cout)
                         + " output channels");

    const Index hw = height * width;
    const Index patch = cin * k * k;
    using Array = typename Tensor<S>::Array;
    Array out(batch * cout * hw);
    detail::ConstRowMap<S> wmat(weight.data(), cout, patch);
    Eigen::Map<const detail::ColVec<S>> b(bias.data(), cout);
    detail::RowMat<S> cols(k == 1 ? 0 : patch, k == 1 ? 0 : hw);
    for (Index n = 0; n < batch; ++n) {
        const S* x = input.data() + n * cin * hw;
        detail::RowMap<S> y(out.data() + n * cout * hw, cout, hw);
        if (k == 1) {
            y.noalias() = wmat * detail::ConstRowMap<S>(x, cin, hw);
        } else {
            detail::im2col(x, cin, height, width, k, cols.data());
            y.noalias() = wmat * cols;
        }
        y.colwise() += b;
    }

    auto back = [batch, cin, cout, height, width, k](detail::TensorNode<S>& node) {
        const Index hw = height * width;
        const Index patch = cin * k * k;
        auto& xn = node.parents[0];
        auto& wn = node.parents[1];
        auto* gx = detail::grad_of(xn);
        auto* gw = detail::grad_of(wn);
        auto* gb = detail::grad_of(node.parents[2]);
        detail::ConstRowMap<S> wmat(wn->value.data(), cout, patch);
        detail::RowMat<S> cols(k == 1 ? 0 : patch, k == 1 ? 0 : hw);
        detail::RowMat<S> dcols(k == 1 ? 0 : patch, k == 1 ? 0 : hw);
        for (Index n = 0; n < batch; ++n) {
            detail::ConstRowMap<S> dy(node.grad.data() + n * cout * hw, cout, hw);
            const S* x = xn->value.data() + n * cin * hw;
            if (gb)
                gb->matrix() += dy.rowwise().sum();
            if (gw) {
                detail::RowMap<S> dw(gw->data(), cout, patch);
                if (k == 1) {
                    dw.noalias() += dy * detail::ConstRowMap<S>(x, cin, hw).transpose();
                } else {
                    detail::im2col(x, cin, height, width, k, cols.data());
                    dw.noalias() += dy * cols.transpose();
                }
            }
            if (gx) {
                S* dx = gx->data() + n * cin * hw;
                if (k == 1) {
                    detail::RowMap<S>(dx, cin, hw).noalias() += wmat.transpose() * dy;
                } else {
                    dcols.noalias() = wmat.transpose() * dy;
                    detail::col2im_add(dcols.data(), cin, height, width, k, dx);
                }
            }
        }
    };
    return Tensor<S>::make_result({batch, cout, height, width}, std::move(out), {input, weight, bias}, back, "conv2d");
}

/// Row-wise affine map: out[n] = weight * in[n] + bias.
template <class S>
Tensor<S> linear(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias)
{
    detail::expect_rank(input.shape(), 2, "linear", "input");
    detail::expect_rank(weight.shape(), 2, "linear", "weight");
    const Index rows = input.dim(0), din = input.dim(1), dout = weight.dim(0);
    if (weight.dim(1) != din)
        throw ShapeError("linear: input width " + std::to_string(din) + " does not match weight "
                         + to_string(weight.shape()));
    if (bias.shape() != Shape{dout})
        throw ShapeError("linear: bias shape " + to_string(bias.shape()) + " does not match output width "
                         + std::to_string(dout));

    typename Tensor<S>::Array out(rows * dout);
    detail::RowMap<S> y(out.data(), rows, dout);
    y.noalias() = detail::ConstRowMap<S>(input.data(), rows, din) * detail::ConstRowMap<S>(weight.data(), dout, din).transpose();
    y.rowwise() += Eigen::Map<const detail::ColVec<S>>(bias.data(), dout).transpose();

    auto back = [rows, din, dout](detail::TensorNode<S>& node) {
        auto& xn = node.parents[0];
        auto& wn = node.parents[1];
        detail::ConstRowMap<S> dy(node.grad.data(), rows, dout);
        if (auto* gx = detail::grad_of(xn))
            detail::RowMap<S>(gx->data(), rows, din).noalias() += dy * detail::ConstRowMap<S>(wn->value.data(), dout, din);
        if (auto* gw = detail::grad_of(wn))
            detail::RowMap<S>(gw->data(), dout, din).noalias()
                += dy.transpose() * detail::ConstRowMap<S>(xn->value.data(), rows, din);
        if (auto* gb = detail::grad_of(node.parents[2]))
            gb->matrix() += dy.colwise().sum().transpose();
    };
    return Tensor<S>::make_result({rows, dout}, std::move(out), {input, weight, bias}, back, "linear");
}

template <class S>
Tensor<S> relu(const Tensor<S>& x)
{
    auto back = [](detail::TensorNode<S>& node) {
        auto& xn = node.parents[0];
        if (auto* g = detail::grad_of(xn))
            *g += (xn->value > S(0)).select(node.grad, S(0));
    };
    return Tensor<S>::make_result(x.shape(), x.values().max(S(0)), {x}, back, "relu");
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x)
{
    typename Tensor<S>::Array y = x.values().unaryExpr([](S v) {
        if (v >= S(0))
            return S(1) / (S(1) + std::exp(-v));
        const S e = std::exp(v);
        return e / (S(1) + e);
    });
    auto back = [](detail::TensorNode<S>& node) {
        if (auto* g = detail::grad_of(node.parents[0]))
            *g += node.grad * node.value * (S(1) - node.value);
    };
    return Tensor<S>::make_result(x.shape(), std::move(y), {x}, back, "sigmoid");
}

/// sin(omega0 * x), the periodic activation of the refine network.
template <class S>
Tensor<S> sine(const Tensor<S>& x, S omega0)
{
    if (!(omega0 > S(0)))
        throw ContractError("sine: omega0 must be positive");
    auto back = [omega0](detail::TensorNode<S>& node) {
        auto& xn = node.parents[0];
        if (auto* g = detail::grad_of(xn))
            *g += node.grad * omega0 * (omega0 * xn->value).cos();
    };
    return Tensor<S>::make_result(x.shape(), (omega0 * x.values()).sin(), {x}, back, "sine");
}

enum class Activation { relu, sigmoid, sine };

template <class S>
Tensor<S> activation(const Tensor<S>& x, Activation kind, S omega0 = S(30))
{
    switch (kind) {
    case Activation::relu:
        return relu(x);
    case Activation::sigmoid:
        return sigmoid(x);
    case Activation::sine:
        return sine(x, omega0);
    }
    throw ContractError("activation: unknown kind");
}

/**
 * Training-mode batch normalization over the batch and spatial axes of a
 * [B,C,H,W] tensor. Batch statistics are always used; there are no running
 * averages.
 */
template <class S>
Tensor<S> batchnorm2d(const Tensor<S>& input, const Tensor<S>& gamma, const Tensor<S>& beta, S eps = S(1e-5))
{
    detail::expect_rank(input.shape(), 4, "batchnorm2d", "input");
    const Index batch = input.dim(0), channels = input.dim(1), hw = input.dim(2) * input.dim(3);
    if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels})
        throw ShapeError("batchnorm2d: affine parameters must have shape [" + std::to_string(channels) + "]");
    const Index count = batch * hw;

    typename Tensor<S>::Array out(input.size());
    typename Tensor<S>::Array xhat(input.size());
    detail::ColVec<S> inv_std(channels);
    for (Index c = 0; c < channels; ++c) {
        S mean = 0;
        for (Index n = 0; n < batch; ++n)
            mean += input.values().segment((n * channels + c) * hw, hw).sum();
        mean /= S(count);
        S var = 0;
        for (Index n = 0; n < batch; ++n)
            var += (input.values().segment((n * channels + c) * hw, hw) - mean).square().sum();
        var /= S(count);
        inv_std[c] = S(1) / std::sqrt(var + eps);
        for (Index n = 0; n < batch; ++n) {
            const Index off = (n * channels + c) * hw;
            xhat.segment(off, hw) = (input.values().segment(off, hw) - mean) * inv_std[c];
            out.segment(off, hw) = gamma.values()[c] * xhat.segment(off, hw) + beta.values()[c];
        }
    }

    auto back = [batch, channels, hw, count, xhat = std::move(xhat), inv_std](detail::TensorNode<S>& node) {
        auto* gx = detail::grad_of(node.parents[0]);
        auto* gg = detail::grad_of(node.parents[1]);
        auto* gbeta = detail::grad_of(node.parents[2]);
        const auto& gamma = node.parents[1]->value;
        for (Index c = 0; c < channels; ++c) {
            S sum_dy = 0, sum_dy_xhat = 0;
            for (Index n = 0; n < batch; ++n) {
                const Index off = (n * channels + c) * hw;
                sum_dy += node.grad.segment(off, hw).sum();
                sum_dy_xhat += (node.grad.segment(off, hw) * xhat.segment(off, hw)).sum();
            }
            if (gg)
                (*gg)[c] += sum_dy_xhat;
            if (gbeta)
                (*gbeta)[c] += sum_dy;
            if (gx) {
                const S scale = gamma[c] * inv_std[c] / S(count);
                for (Index n = 0; n < batch; ++n) {
                    const Index off = (n * channels + c) * hw;
                    gx->segment(off, hw) += scale
                        * (S(count) * node.grad.segment(off, hw) - sum_dy - xhat.segment(off, hw) * sum_dy_xhat);
                }
            }
        }
    };
    return Tensor<S>::make_result(input.shape(), std::move(out), {input, gamma, beta}, back, "batchnorm2d");
}

/// Concatenates [B,Ci,H,W] tensors along the channel axis, preserving input order.
template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& inputs)
{
    if (inputs.empty())
        throw ShapeError("concat_channels: no inputs");
    for (const auto& t : inputs)
        detail::expect_rank(t.shape(), 4, "concat_channels", "every input");
    const Index batch = inputs[0].dim(0), height = inputs[0].dim(2), width = inputs[0].dim(3);
    const Index hw = height * width;
    Index total = 0;
    std::vector<Index> channels;
    for (const auto& t : inputs) {
        if (t.dim(0) != batch || t.dim(2) != height || t.dim(3) != width)
            throw ShapeError("concat_channels: " + to_string(t.shape()) + " does not match "
                             + to_string(inputs[0].shape()) + " outside the channel axis");
        channels.push_back(t.dim(1));
        total += t.dim(1);
    }
    typename Tensor<S>::Array out(batch * total * hw);
    for (Index n = 0; n < batch; ++n) {
        Index offset = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            out.segment((n * total + offset) * hw, channels[i] * hw)
                = inputs[i].values().segment(n * channels[i] * hw, channels[i] * hw);
            offset += channels[i];
        }
    }
    auto back = [batch, total, hw, channels](detail::TensorNode<S>& node) {
        for (Index n = 0; n < batch; ++n) {
            Index offset = 0;
            for (std::size_t i = 0; i < channels.size(); ++i) {
                if (auto* g = detail::grad_of(node.parents[i]))
                    g->segment(n * channels[i] * hw, channels[i] * hw)
                        += node.grad.segment((n * total + offset) * hw, channels[i] * hw);
                offset += channels[i];
            }
        }
    };
    return Tensor<S>::make_result({batch, total, height, width}, std::move(out), inputs, back, "concat_channels");
}

/// Channels [begin, begin + count) of a [B,C,H,W] tensor.
template <class S>
Tensor<S> slice_channels(const Tensor<S>& input, Index begin, Index count)
{
    detail::expect_rank(input.shape(), 4, "slice_channels", "input");
    const Index batch = input.dim(0), channels = input.dim(1), hw = input.dim(2) * input.dim(3);
    if (begin < 0 || count <= 0 || begin + count > channels)
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(begin + count)
                         + ") outside " + std::to_string(channels) + " channels");
    typename Tensor<S>::Array out(batch * count * hw);
    for (Index n = 0; n < batch; ++n)
        out.segment(n * count * hw, count * hw) = input.values().segment((n * channels + begin) * hw, count * hw);
    auto back = [batch, channels, hw, begin, count](detail::TensorNode<S>& node) {
        if (auto* g = detail::grad_of(node.parents[0]))
            for (Index n = 0; n < batch; ++n)
                g->segment((n * channels + begin) * hw, count * hw) += node.grad.segment(n * count * hw, count * hw);
    };
    return Tensor<S>::make_result({batch, count, input.dim(2), input.dim(3)}, std::move(out), {input}, back,
                                  "slice_channels");
}

/// Item `index` of the leading axis, keeping that axis with extent 1.
template <class S>
Tensor<S> select_batch(const Tensor<S>& input, Index index)
{
    const Index batch = input.dim(0);
    if (index < 0 || index >= batch)
        throw ShapeError("select_batch: index " + std::to_string(index) + " outside batch of " + std::to_string(batch));
    const Index item = input.size() / batch;
    Shape shape = input.shape();
    shape[0] = 1;
    auto back = [index, item](detail::TensorNode<S>& node) {
        if (auto* g = detail::grad_of(node.parents[0]))
            g->segment(index * item, item) += node.grad;
    };
    return Tensor<S>::make_result(std::move(shape), input.values().segment(index * item, item), {input}, back,
                                  "select_batch");
}

/// Stacks same-shaped tensors along a new leading axis.
template <class S>
Tensor<S> stack(const std::vector<Tensor<S>>& inputs)
{
    if (inputs.empty())
        throw ShapeError("stack: no inputs");
    const Index item = inputs[0].size();
    for (const auto& t : inputs)
        if (t.shape() != inputs[0].shape())
            throw ShapeError("stack: " + to_string(t.shape()) + " differs from " + to_string(inputs[0].shape()));
    Shape shape{static_cast<Index>(inputs.size())};
    shape.insert(shape.end(), inputs[0].shape().begin(), inputs[0].shape().end());
    typename Tensor<S>::Array out(item * static_cast<Index>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i)
        out.segment(static_cast<Index>(i) * item, item) = inputs[i].values();
    auto back = [item](detail::TensorNode<S>& node) {
        for (std::size_t i = 0; i < node.parents.size(); ++i)
            if (auto* g = detail::grad_of(node.parents[i]))
                *g += node.grad.segment(static_cast<Index>(i) * item, item);
    };
    return Tensor<S>::make_result(std::move(shape), std::move(out), inputs, back, "stack");
}

template <class S>
Tensor<S> reshape(const Tensor<S>& input, Shape shape)
{
    if (shape_size(shape) != input.size())
        throw ShapeError("reshape: " + to_string(input.shape()) + " cannot become " + to_string(shape));
    auto back = [](detail::TensorNode<S>& node) {
        if (auto* g = detail::grad_of(node.parents[0]))
            *g += node.grad;
    };
    return Tensor<S>::make_result(std::move(shape), input.values(), {input}, back, "reshape");
}

/// Rank-2 transpose.
template <class S>
Tensor<S> transpose(const Tensor<S>& input)
{
    detail::expect_rank(input.shape(), 2, "transpose", "input");
    const Index rows = input.dim(0), cols = input.dim(1);
    typename Tensor<S>::Array out(input.size());
    detail::RowMap<S>(out.data(), cols, rows) = detail::ConstRowMap<S>(input.data(), rows, cols).transpose();
    auto back = [rows, cols](detail::TensorNode<S>& node) {
        if (auto* g = detail::grad_of(node.parents[0]))
            detail::RowMap<S>(g->data(), rows, cols) += detail::ConstRowMap<S>(node.grad.data(), cols, rows).transpose();
    };
    return Tensor<S>::make_result({cols, rows}, std::move(out), {input}, back, "transpose");
}

/// Mean absolute difference. The subgradient at a == b is 0.
template <class S>
Tensor<S> l1_loss(const Tensor<S>& a, const Tensor<S>& b)
{
    if (a.shape() != b.shape())
        throw ShapeError("l1_loss: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    const S n = S(a.size());
    const S value = (a.values() - b.values()).abs().sum() / n;
    auto back = [n](detail::TensorNode<S>& node) {
        auto& an = node.parents[0];
        auto& bn = node.parents[1];
        const S scale = node.grad[0] / n;
        auto sign = (an->value - bn->value).sign();
        if (auto* ga = detail::grad_of(an))
            *ga += scale * sign;
        if (auto* gb = detail::grad_of(bn))
            *gb -= scale * sign;
    };
    return Tensor<S>::make_result({1}, Tensor<S>::Array::Constant(1, value), {a, b}, back, "l1_loss");
}

template <class S>
Tensor<S> sum(const Tensor<S>& x)
{
    auto back = [](detail::TensorNode<S>& node) {
        if (auto* g = detail::grad_of(node.parents[0]))
            *g += node.grad[0];
    };
    return Tensor<S>::make_result({1}, Tensor<S>::Array::Constant(1, x.values().sum()), {x}, back, "sum");
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b)
{
    if (a.shape() != b.shape())
        throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    auto back = [](detail::TensorNode<S>& node) {
        for (auto& p : node.parents)
            if (auto* g = detail::grad_of(p))
                *g += node.grad;
    };
    return Tensor<S>::make_result(a.shape(), a.values() + b.values(), {a, b}, back, "add");
}

template <class S>
Tensor<S> scale(const Tensor<S>& x, S factor)
{
    auto back = [factor](detail::TensorNode<S>& node) {
        if (auto* g = detail::grad_of(node.parents[0]))
            *g += factor * node.grad;
    };
    return Tensor<S>::make_result(x.shape(), factor * x.values(), {x}, back, "scale");
}

} // namespace cbvd
