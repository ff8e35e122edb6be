#include "support.hpp"

#include "cbvd/networks.hpp"

#include <doctest.h>

#include <cstring>
#include <map>

using namespace cbvd;
using cbvd::testing::random_tensor;

namespace {

NetworkConfig small_config()
{
    NetworkConfig cfg;
    cfg.in_channels = 3;
    cfg.window = 5;
    cfg.levels = 2;
    cfg.feature_width = 8;
    cfg.denoise_width = 8;
    cfg.denoise_bottleneck = 4;
    cfg.refine_width = 8;
    return cfg;
}

template <class S>
void zero_all(const ParameterList<S>& params)
{
    for (auto p : params)
        p.tensor.values().setZero();
}

bool same_bits(const TensorF& a, const TensorF& b)
{
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), sizeof(float) * std::size_t(a.size())) == 0;
}

} // namespace

TEST_CASE("parameter shapes follow the layer tables")
{
    NetworkConfig cfg; // default widths, RGB, B = 5, L = 30
    const auto p = init_params<float>(cfg, 1);
    std::map<std::string, Shape> shapes;
    for (const auto& [name, t] : parameters(p))
        shapes[name] = t.shape();

    CHECK(shapes.at("feature.conv_0.weight") == Shape{256, 180, 1, 1});
    for (int i = 1; i <= 4; ++i)
        CHECK(shapes.at("feature.conv_" + std::to_string(i) + ".weight") == Shape{256, 256, 3, 3});
    CHECK(shapes.at("feature.conv_5.weight") == Shape{15, 256, 3, 3});
    CHECK(shapes.at("feature.conv_5.bias") == Shape{15});
    CHECK(shapes.at("feature.bn_0.gamma") == Shape{256});
    CHECK(shapes.at("feature.bn_1.beta") == Shape{256});
    CHECK(shapes.count("feature.bn_2.gamma") == 0);

    CHECK(shapes.at("denoise.conv_0.weight") == Shape{256, 75, 1, 1});
    CHECK(shapes.at("denoise.conv_1.weight") == Shape{96, 256, 1, 1});
    CHECK(shapes.at("denoise.conv_2.weight") == Shape{3, 96, 1, 1});
    CHECK(shapes.count("denoise.conv_3.weight") == 0);

    CHECK(shapes.at("refine.mlp_0.weight") == Shape{256, 3});
    for (int i = 1; i <= 3; ++i)
        CHECK(shapes.at("refine.mlp_" + std::to_string(i) + ".weight") == Shape{256, 256});
    CHECK(shapes.at("refine.mlp_out.weight") == Shape{3, 256});
    CHECK(shapes.at("refine.mlp_out.bias") == Shape{3});
}

TEST_CASE("six-layer denoiser and grayscale extents")
{
    NetworkConfig cfg = small_config();
    cfg.in_channels = 1;
    cfg.denoiser = DenoiserLayout::six_layer;
    const auto p = init_params<float>(cfg, 2);
    CHECK(cfg.resolved_feat_channels() == 5);
    CHECK(p.denoise.convs.size() == 6);
    CHECK(p.denoise.convs[0].weight.shape() == Shape{8, 25, 3, 3});
    CHECK(p.denoise.convs[4].weight.shape() == Shape{4, 8, 1, 1});
    CHECK(p.denoise.convs[5].weight.shape() == Shape{1, 4, 1, 1});
}

TEST_CASE("feature_forward")
{
    SUBCASE("default extents")
    {
        NetworkConfig cfg = small_config();
        cfg.levels = 30;
        const auto p = init_params<float>(cfg, 3);
        std::mt19937_64 rng(3);
        const TensorF input = random_tensor<float>({5, 180, 32, 32}, rng);
        const TensorF out = feature_forward(p.feature, input);
        CHECK(out.shape() == Shape{5, 15, 32, 32});
        CHECK(same_bits(out, feature_forward(p.feature, input)));
    }

    SUBCASE("zero parameters give zero features")
    {
        const NetworkConfig cfg = small_config();
        auto p = init_params<float>(cfg, 4);
        zero_all(parameters(p.feature));
        std::mt19937_64 rng(4);
        const TensorF out = feature_forward(p.feature, random_tensor<float>({5, 12, 6, 6}, rng));
        CHECK((out.values() == 0.0f).all());
    }

    SUBCASE("channel mismatch")
    {
        const auto p = init_params<float>(small_config(), 5);
        CHECK_THROWS_AS(feature_forward(p.feature, TensorF({5, 13, 4, 4})), ShapeError);
    }
}

TEST_CASE("denoise_forward")
{
    const NetworkConfig cfg = small_config();
    std::mt19937_64 rng(6);

    SUBCASE("zero parameters give 0.5")
    {
        auto p = init_params<float>(cfg, 6);
        zero_all(parameters(p.denoise));
        const TensorF out = denoise_forward(p.denoise, random_tensor<float>({5, 15, 4, 4}, rng));
        CHECK(out.shape() == Shape{1, 3, 4, 4});
        CHECK((out.values() == 0.5f).all());
    }

    SUBCASE("output stays strictly inside (0, 1)")
    {
        const auto p = init_params<float>(cfg, 7);
        for (int trial = 0; trial < 5; ++trial) {
            const TensorF out = denoise_forward(p.denoise, random_tensor<float>({5, 15, 5, 5}, rng, -3.0, 3.0));
            CHECK((out.values() > 0.0f).all());
            CHECK((out.values() < 1.0f).all());
        }
    }

    SUBCASE("window channels are concatenated")
    {
        const auto p = init_params<float>(cfg, 8);
        CHECK(p.denoise.convs[0].weight.dim(1) == 75);
        CHECK_THROWS_AS(denoise_forward(p.denoise, TensorF({4, 15, 4, 4})), ShapeError);
    }
}

TEST_CASE("refine_forward")
{
    const NetworkConfig cfg = small_config();
    const CoordGrid grid = make_grid(6, 5, 2, 4);

    SUBCASE("zero output layer gives the bias everywhere")
    {
        auto p = init_params<float>(cfg, 9);
        auto& last = p.refine.layers.back();
        last.weight.values().setZero();
        last.bias.values() << 0.1f, 0.2f, 0.3f;
        const TensorF out = refine_forward(p.refine, grid);
        CHECK(out.shape() == Shape{1, 3, 6, 5});
        for (Index c = 0; c < 3; ++c)
            CHECK((out.values().segment(c * 30, 30) == last.bias.data()[c]).all());
    }

    SUBCASE("first sine layer evaluates sin(omega0 * w . p)")
    {
        RefineNet<double> net;
        net.omega0 = 30.0;
        net.layers.push_back({TensorD::from({1, 3}, (TensorD::Array(3) << 1.0, 0.0, 0.0).finished()), TensorD({1})});
        net.layers.push_back({TensorD({1, 1}, 1.0), TensorD({1})});
        const TensorD point = TensorD::from({1, 3}, (TensorD::Array(3) << std::numbers::pi / 60.0, 0.3, -0.2).finished());
        CHECK(refine_points(net, point).item() == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("deterministic and pointwise")
    {
        const auto p = init_params<float>(cfg, 10);
        CHECK(same_bits(refine_forward(p.refine, grid), refine_forward(p.refine, grid)));

        const TensorF points = coordinate_points<float>(grid);
        const TensorF out = refine_points(p.refine, points);
        const Index n = points.dim(0);
        std::vector<Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(10);
        std::shuffle(perm.begin(), perm.end(), rng);
        TensorF shuffled({n, 3});
        for (Index i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c)
                shuffled.data()[i * 3 + c] = points.data()[perm[std::size_t(i)] * 3 + c];
        const TensorF out_perm = refine_points(p.refine, shuffled);
        for (Index i = 0; i < n; ++i)
            for (Index c = 0; c < 3; ++c)
                CHECK(out_perm.data()[i * 3 + c] == doctest::Approx(out.data()[perm[std::size_t(i)] * 3 + c]).epsilon(1e-6));
    }
}

TEST_CASE("init_params")
{
    NetworkConfig cfg;
    cfg.feature_width = 16;
    cfg.denoise_width = 16;
    cfg.denoise_bottleneck = 8;
    const auto a = init_params<float>(cfg, 42);
    const auto b = init_params<float>(cfg, 42);
    const auto c = init_params<float>(cfg, 43);
    const auto pa = parameters(a), pb = parameters(b), pc = parameters(c);
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(same_bits(pa[i].tensor, pb[i].tensor));
        any_diff = any_diff || !same_bits(pa[i].tensor, pc[i].tensor);
        if (pa[i].name.ends_with(".bias") || pa[i].name.ends_with(".beta"))
            CHECK((pa[i].tensor.values() == 0.0f).all());
        if (pa[i].name.ends_with(".gamma"))
            CHECK((pa[i].tensor.values() == 1.0f).all());
    }
    CHECK(any_diff);

    // SIREN scheme at width 256: first layer within 1/3, later layers within sqrt(6/256)/30.
    const double hidden_bound = std::sqrt(6.0 / 256.0) / 30.0;
    CHECK(a.refine.layers[0].weight.values().abs().maxCoeff() <= 1.0 / 3.0);
    for (std::size_t i = 1; i < a.refine.layers.size(); ++i) {
        const auto& w = a.refine.layers[i].weight.values();
        CHECK(w.abs().maxCoeff() <= hidden_bound);
        CHECK(w.abs().maxCoeff() > 0.8 * hidden_bound);
    }

    // Convolutions are fan-in scaled.
    const auto& conv1 = a.feature.convs[1].weight;
    CHECK(conv1.values().abs().maxCoeff() <= 1.0 / std::sqrt(double(conv1.dim(1) * 9)));
}

TEST_CASE("central channels are the middle C_in slice")
{
    NetworkConfig cfg = small_config();
    CHECK(cfg.central_begin() == 6);
    cfg.feat_channels = 16;
    CHECK(cfg.central_begin() == 6);
    cfg.in_channels = 1;
    cfg.feat_channels = 0;
    CHECK(cfg.central_begin() == 2);

    const TensorF features = TensorF::from({2, 5, 1, 1}, TensorF::Array::LinSpaced(10, 0.0f, 9.0f));
    const TensorF mid = central_channels(features, cfg);
    CHECK(mid.shape() == Shape{2, 1, 1, 1});
    CHECK(mid.data()[0] == 2.0f);
    CHECK(mid.data()[1] == 7.0f);
}

TEST_CASE("config validation")
{
    NetworkConfig cfg = small_config();
    cfg.feat_channels = 2;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = small_config();
    cfg.omega0 = 0.0;
    CHECK_THROWS_AS(init_params<float>(cfg, 0), ContractError);
}
