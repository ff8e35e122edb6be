#pragma once
// Shared test helpers: finite-difference gradients, brute-force metric
// oracles and scratch directories. Nothing here calls the code under test
// for the quantity being checked.

#include "cbvd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace cbvd::testing {

inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("cbvd_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

template <class S>
Tensor<S> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false)
{
    std::uniform_real_distribution<double> u(lo, hi);
    typename Tensor<S>::Array v(shape_size(shape));
    for (Index i = 0; i < v.size(); ++i)
        v[i] = S(u(rng));
    return Tensor<S>::from(std::move(shape), std::move(v), requires_grad);
}

/// Central differences of `loss` with respect to every element of `x`.
inline Eigen::ArrayXd numeric_gradient(TensorD& x, const std::function<double()>& loss, double step = 1e-6)
{
    Eigen::ArrayXd g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + step;
        const double up = loss();
        x.data()[i] = saved - step;
        const double down = loss();
        x.data()[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// max |a - n| / max |n|, the worst elementwise error relative to the
/// gradient's scale. Immune to spuriously large ratios at entries that are
/// numerically zero.
inline double relative_error(const Eigen::ArrayXd& analytic, const Eigen::ArrayXd& numeric)
{
    const double scale = std::max(numeric.abs().maxCoeff(), 1e-10);
    return (analytic - numeric).abs().maxCoeff() / scale;
}

/**
 * Runs `build` once with gradients to get the analytic gradient of every
 * input, then compares against central differences. Returns the worst
 * relative error across inputs.
 */
inline double gradient_check(std::vector<TensorD> inputs, const std::function<TensorD()>& build)
{
    for (auto& x : inputs) {
        x.set_requires_grad(true);
        x.clear_grad();
    }
    backward(build());
    std::vector<Eigen::ArrayXd> analytic;
    for (auto& x : inputs)
        analytic.push_back(x.has_grad() ? Eigen::ArrayXd(x.grad()) : Eigen::ArrayXd::Zero(x.size()));

    NoGradGuard no_grad;
    const auto loss = [&build] { return build().item(); };
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        worst = std::max(worst, relative_error(analytic[i], numeric_gradient(inputs[i], loss)));
    return worst;
}

/// 10 log10(1 / mean squared error), straight from the definition.
inline double direct_psnr(const std::vector<double>& a, const std::vector<double>& b)
{
    long double sse = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i)
        sse += (long double)(a[i] - b[i]) * (long double)(a[i] - b[i]);
    const double mse = double(sse / (long double)a.size());
    return mse == 0.0 ? 99.0 : 10.0 * std::log10(1.0 / mse);
}

/**
 * Mean SSIM over every valid 11x11 window of one channel, evaluating the
 * Gaussian-weighted moments with a full 2-D window sum at every position.
 */
inline double direct_ssim_channel(const double* a, const double* b, Index h, Index w)
{
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    double kernel[win][win];
    double total = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double di = i - win / 2, dj = j - win / 2;
            kernel[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            total += kernel[i][j];
        }
    for (auto& row : kernel)
        for (double& k : row)
            k /= total;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double acc = 0.0;
    Index count = 0;
    for (Index y = 0; y + win <= h; ++y)
        for (Index x = 0; x + win <= w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double k = kernel[i][j];
                    const double va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            ++count;
        }
    return acc / double(count);
}

inline double direct_ssim(const TensorF& a, const TensorF& b)
{
    const Index c = a.dim(0), h = a.dim(1), w = a.dim(2);
    std::vector<double> da(a.data(), a.data() + a.size()), db(b.data(), b.data() + b.size());
    double sum = 0.0;
    for (Index ch = 0; ch < c; ++ch)
        sum += direct_ssim_channel(da.data() + ch * h * w, db.data() + ch * h * w, h, w);
    return sum / double(c);
}

} // namespace cbvd::testing
