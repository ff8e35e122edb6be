#pragma once

// Feature generator, denoiser and SIREN refine network.
//
// Layer tables (C_in image channels, C_feat feature channels, B window size):
//   feature:  conv_0 1x1 -> W_f, BN, ReLU | conv_1 3x3 -> W_f, BN, ReLU |
//             conv_2..conv_4 3x3 -> W_f, ReLU | conv_5 3x3 -> C_feat
//   denoise:  (table)     B*C_feat -> 1x1 256 ReLU -> 1x1 96 ReLU -> 1x1 C_in sigmoid
//             (six_layer) B*C_feat -> 3x3 256 ReLU x4 -> 1x1 96 ReLU -> 1x1 C_in sigmoid
//   refine:   3 -> 256 sine x4 -> linear C_in
// W_f is 256 unless overridden.

#include "cbvd/adam.hpp"
#include "cbvd/grid.hpp"
#include "cbvd/ops.hpp"
#include "cbvd/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cbvd {

enum class DenoiserLayout { table, six_layer };

struct NetworkConfig {
    Index in_channels = 3;   // C_in
    Index feat_channels = 0; // C_feat; 0 selects C_in * window
    Index window = 5;        // B
    int levels = 30;         // L
    bool append_raw = false;
    Index feature_width = 256;
    Index denoise_width = 256;
    Index denoise_bottleneck = 96;
    DenoiserLayout denoiser = DenoiserLayout::table;
    Index refine_width = 256;
    int refine_hidden = 4;
    double omega0 = 30.0;
    double bn_eps = 1e-5;

    Index resolved_feat_channels() const { return feat_channels > 0 ? feat_channels : in_channels * window; }
    Index encoded_depth() const { return encoded_channels(levels, append_raw); }
    /// First channel of the middle C_in-wide slice of a feature map.
    Index central_begin() const { return (resolved_feat_channels() - in_channels) / 2; }
    void validate() const;
};

inline void NetworkConfig::validate() const
{
    if (in_channels <= 0 || window <= 0 || levels < 1)
        throw ContractError("network config: C_in, B and L must be positive");
    if (resolved_feat_channels() < in_channels)
        throw ContractError("network config: C_feat (" + std::to_string(resolved_feat_channels())
                            + ") must be at least C_in (" + std::to_string(in_channels) + ")");
    if (feature_width <= 0 || denoise_width <= 0 || denoise_bottleneck <= 0 || refine_width <= 0 || refine_hidden < 1)
        throw ContractError("network config: layer widths must be positive");
    if (!(omega0 > 0.0) || !(bn_eps > 0.0))
        throw ContractError("network config: omega0 and bn_eps must be positive");
}

template <class S>
struct ConvLayer {
    Tensor<S> weight; // [Cout, Cin, k, k]
    Tensor<S> bias;   // [Cout]
};

template <class S>
struct DenseLayer {
    Tensor<S> weight; // [Dout, Din]
    Tensor<S> bias;   // [Dout]
};

template <class S>
struct FeatureGenerator {
    std::vector<ConvLayer<S>> convs;
    std::vector<Tensor<S>> bn_gamma;
    std::vector<Tensor<S>> bn_beta;
    S bn_eps = S(1e-5);
};

template <class S>
struct DenoiseNet {
    std::vector<ConvLayer<S>> convs;
};

template <class S>
struct RefineNet {
    std::vector<DenseLayer<S>> layers; // hidden sine layers, then the linear output layer
    S omega0 = S(30);
};

template <class S>
struct NetworkParams {
    FeatureGenerator<S> feature;
    DenoiseNet<S> denoise;
    RefineNet<S> refine;
};

inline constexpr int kFeatureLayers = 6;
inline constexpr int kFeatureNormLayers = 2;

template <class S>
ParameterList<S> parameters(const FeatureGenerator<S>& net)
{
    ParameterList<S> out;
    for (std::size_t i = 0; i < net.convs.size(); ++i) {
        const std::string p = "feature.conv_" + std::to_string(i);
        out.push_back({p + ".weight", net.convs[i].weight});
        out.push_back({p + ".bias", net.convs[i].bias});
        if (i < net.bn_gamma.size()) {
            const std::string b = "feature.bn_" + std::to_string(i);
            out.push_back({b + ".gamma", net.bn_gamma[i]});
            out.push_back({b + ".beta", net.bn_beta[i]});
        }
    }
    return out;
}

template <class S>
ParameterList<S> parameters(const DenoiseNet<S>& net)
{
    ParameterList<S> out;
    for (std::size_t i = 0; i < net.convs.size(); ++i) {
        const std::string p = "denoise.conv_" + std::to_string(i);
        out.push_back({p + ".weight", net.convs[i].weight});
        out.push_back({p + ".bias", net.convs[i].bias});
    }
    return out;
}

template <class S>
ParameterList<S> parameters(const RefineNet<S>& net)
{
    ParameterList<S> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const bool last = i + 1 == net.layers.size();
        const std::string p = last ? std::string("refine.mlp_out") : "refine.mlp_" + std::to_string(i);
        out.push_back({p + ".weight", net.layers[i].weight});
        out.push_back({p + ".bias", net.layers[i].bias});
    }
    return out;
}

/// Feature generator, then denoiser, then refine network.
template <class S>
ParameterList<S> parameters(const NetworkParams<S>& params)
{
    ParameterList<S> out = parameters(params.feature);
    for (auto& p : parameters(params.denoise))
        out.push_back(std::move(p));
    for (auto& p : parameters(params.refine))
        out.push_back(std::move(p));
    return out;
}

template <class S>
void set_requires_grad(const ParameterList<S>& params, bool on)
{
    for (const auto& p : params) {
        auto t = p.tensor;
        t.set_requires_grad(on);
    }
}

/// Per-frame feature maps F_t from a [B, D, H, W] encoded batch.
template <class S>
Tensor<S> feature_forward(const FeatureGenerator<S>& net, const Tensor<S>& encoded)
{
    if (net.convs.empty())
        throw ContractError("feature_forward: network has no layers");
    if (encoded.rank() != 4 || encoded.dim(1) != net.convs[0].weight.dim(1))
        throw ShapeError("feature_forward: encoded input " + to_string(encoded.shape()) + " does not match conv_0 "
                         + to_string(net.convs[0].weight.shape()));
    Tensor<S> x = encoded;
    for (std::size_t i = 0; i < net.convs.size(); ++i) {
        x = conv2d(x, net.convs[i].weight, net.convs[i].bias);
        if (i < net.bn_gamma.size())
            x = batchnorm2d(x, net.bn_gamma[i], net.bn_beta[i], net.bn_eps);
        if (i + 1 < net.convs.size())
            x = relu(x);
    }
    return x;
}

/// Denoised central frame from the window's [B, C_feat, H, W] feature maps.
template <class S>
Tensor<S> denoise_forward(const DenoiseNet<S>& net, const Tensor<S>& features)
{
    if (net.convs.empty())
        throw ContractError("denoise_forward: network has no layers");
    if (features.rank() != 4)
        throw ShapeError("denoise_forward: features must be [B, C_feat, H, W], got " + to_string(features.shape()));
    std::vector<Tensor<S>> frames;
    for (Index b = 0; b < features.dim(0); ++b)
        frames.push_back(select_batch(features, b));
    Tensor<S> x = concat_channels(frames);
    if (x.dim(1) != net.convs[0].weight.dim(1))
        throw ShapeError("denoise_forward: concatenated features have " + std::to_string(x.dim(1))
                         + " channels, conv_0 expects " + std::to_string(net.convs[0].weight.dim(1)));
    for (std::size_t i = 0; i < net.convs.size(); ++i) {
        x = conv2d(x, net.convs[i].weight, net.convs[i].bias);
        x = i + 1 < net.convs.size() ? relu(x) : sigmoid(x);
    }
    return x;
}

/// Refine-network output per point: [N, 3] coordinates -> [N, C_in].
template <class S>
Tensor<S> refine_points(const RefineNet<S>& net, const Tensor<S>& points)
{
    if (net.layers.empty())
        throw ContractError("refine_forward: network has no layers");
    Tensor<S> x = points;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        x = linear(x, net.layers[i].weight, net.layers[i].bias);
        if (i + 1 < net.layers.size())
            x = sine(x, net.omega0);
    }
    return x;
}

/// Refined image [1, C_in, H, W] evaluated at every coordinate of the grid.
template <class S>
Tensor<S> refine_forward(const RefineNet<S>& net, const CoordGrid& grid)
{
    Tensor<S> per_point = refine_points(net, coordinate_points<S>(grid));
    const Index channels = per_point.dim(1);
    return reshape(transpose(per_point), {1, channels, grid.height, grid.width});
}

/// Middle C_in channels of each feature map.
template <class S>
Tensor<S> central_channels(const Tensor<S>& features, const NetworkConfig& cfg)
{
    return slice_channels(features, cfg.central_begin(), cfg.in_channels);
}

namespace detail {

template <class S>
Tensor<S> uniform_tensor(Shape shape, double bound, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    typename Tensor<S>::Array values(shape_size(shape));
    for (Index i = 0; i < values.size(); ++i)
        values[i] = S(dist(rng));
    return Tensor<S>::from(std::move(shape), std::move(values), true);
}

template <class S>
ConvLayer<S> make_conv(Index cin, Index cout, int k, std::mt19937_64& rng)
{
    const double fan_in = double(cin * k * k);
    return {uniform_tensor<S>({cout, cin, k, k}, 1.0 / std::sqrt(fan_in), rng), Tensor<S>({cout}, S(0), true)};
}

} // namespace detail

/**
 * Fresh parameters for all three networks, drawn from one seeded stream.
 *
 * Convolutions use U(-1/sqrt(fan_in), 1/sqrt(fan_in)). The SIREN first layer
 * uses U(-1/n, 1/n) and every later layer U(-sqrt(6/n)/omega0, sqrt(6/n)/omega0).
 * Biases start at zero, batch-norm scales at one.
 */
template <class S>
NetworkParams<S> init_params(const NetworkConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    std::mt19937_64 rng(seed);
    NetworkParams<S> p;

    const Index wf = cfg.feature_width;
    Index cin = cfg.encoded_depth();
    for (int i = 0; i < kFeatureLayers; ++i) {
        const int k = i == 0 ? 1 : 3;
        const Index cout = i + 1 == kFeatureLayers ? cfg.resolved_feat_channels() : wf;
        p.feature.convs.push_back(detail::make_conv<S>(cin, cout, k, rng));
        if (i < kFeatureNormLayers) {
            p.feature.bn_gamma.push_back(Tensor<S>({cout}, S(1), true));
            p.feature.bn_beta.push_back(Tensor<S>({cout}, S(0), true));
        }
        cin = cout;
    }
    p.feature.bn_eps = S(cfg.bn_eps);

    cin = cfg.window * cfg.resolved_feat_channels();
    std::vector<std::pair<Index, int>> denoise_layers;
    if (cfg.denoiser == DenoiserLayout::table)
        denoise_layers = {{cfg.denoise_width, 1}, {cfg.denoise_bottleneck, 1}, {cfg.in_channels, 1}};
    else
        denoise_layers = {{cfg.denoise_width, 3}, {cfg.denoise_width, 3}, {cfg.denoise_width, 3},
                          {cfg.denoise_width, 3}, {cfg.denoise_bottleneck, 1}, {cfg.in_channels, 1}};
    for (auto [cout, k] : denoise_layers) {
        p.denoise.convs.push_back(detail::make_conv<S>(cin, cout, k, rng));
        cin = cout;
    }

    p.refine.omega0 = S(cfg.omega0);
    Index din = 3;
    for (int i = 0; i <= cfg.refine_hidden; ++i) {
        const Index dout = i == cfg.refine_hidden ? cfg.in_channels : cfg.refine_width;
        const double n = double(din);
        const double bound = i == 0 ? 1.0 / n : std::sqrt(6.0 / n) / cfg.omega0;
        p.refine.layers.push_back({detail::uniform_tensor<S>({dout, din}, bound, rng), Tensor<S>({dout}, S(0), true)});
        din = dout;
    }
    return p;
}

} // namespace cbvd
