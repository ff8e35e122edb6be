#pragma once

#include "cbvd/tensor.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace cbvd {

/// Normalized (x, y, t) coordinates of every pixel of one frame, each in [-1, 1].
struct CoordGrid {
    Index height = 0;
    Index width = 0;
    Index frame = 0;
    Index frames = 0;
    Tensor<double> values; // [H, W, 3]; x along width, y along height
};

/// linspace(-1, 1, n)[i]; a single sample sits at the midpoint 0.
double normalized_coordinate(Index i, Index n);

CoordGrid make_grid(Index height, Index width, Index frame, Index frames);

template <class S>
struct EncodedGrid {
    int levels = 0;
    bool append_raw = false;
    Tensor<S> values; // [H, W, D]
};

inline Index encoded_channels(int levels, bool append_raw) { return 6 * Index(levels) + (append_raw ? 3 : 0); }

/**
 * Sinusoidal positional encoding of every coordinate.
 *
 * Channel order is component-major, then level, then sin before cos:
 * [sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x), <same for y>, <same for t>],
 * followed by the raw (x, y, t) when append_raw is set. Evaluated in double;
 * at L = 30 the top octave is 2^29 pi.
 */
template <class S>
EncodedGrid<S> encode(const CoordGrid& grid, int levels, bool append_raw = false)
{
    if (levels < 1)
        throw ContractError("encode: frequency level L must be >= 1, got " + std::to_string(levels));
    const Index depth = encoded_channels(levels, append_raw);
    const Index points = grid.height * grid.width;
    typename Tensor<S>::Array out(points * depth);
    const double* coords = grid.values.data();
    for (Index p = 0; p < points; ++p) {
        S* dst = out.data() + p * depth;
        Index ch = 0;
        for (int c = 0; c < 3; ++c) {
            const double v = coords[p * 3 + c];
            for (int j = 0; j < levels; ++j) {
                const double arg = std::ldexp(std::numbers::pi, j) * v;
                dst[ch++] = S(std::sin(arg));
                dst[ch++] = S(std::cos(arg));
            }
        }
        if (append_raw)
            for (int c = 0; c < 3; ++c)
                dst[ch++] = S(coords[p * 3 + c]);
    }
    EncodedGrid<S> enc;
    enc.levels = levels;
    enc.append_raw = append_raw;
    enc.values = Tensor<S>::from({grid.height, grid.width, depth}, std::move(out));
    return enc;
}

/// Stacks encoded grids into the [B, D, H, W] layout the convolutions consume.
template <class S>
Tensor<S> channels_first(const std::vector<const EncodedGrid<S>*>& grids)
{
    if (grids.empty())
        throw ShapeError("channels_first: no grids");
    const Index height = grids[0]->values.dim(0), width = grids[0]->values.dim(1), depth = grids[0]->values.dim(2);
    const Index hw = height * width;
    typename Tensor<S>::Array out(static_cast<Index>(grids.size()) * depth * hw);
    for (std::size_t b = 0; b < grids.size(); ++b) {
        if (grids[b]->values.shape() != grids[0]->values.shape())
            throw ShapeError("channels_first: grid shapes differ");
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> src(grids[b]->values.data(),
                                                                                                  hw, depth);
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dst(
            out.data() + static_cast<Index>(b) * depth * hw, depth, hw);
        dst = src.transpose();
    }
    return Tensor<S>::from({static_cast<Index>(grids.size()), depth, height, width}, std::move(out));
}

/// The grid as an [H*W, 3] point list in raster order, for the refine network.
template <class S>
Tensor<S> coordinate_points(const CoordGrid& grid)
{
    return Tensor<S>::from({grid.height * grid.width, 3}, grid.values.values().template cast<S>());
}

} // namespace cbvd
