#include "support.hpp"

#include "cbvd/frames.hpp"
#include "cbvd/keyvalue.hpp"
#include "cbvd/noise.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace cbvd;
namespace fs = std::filesystem;

namespace {

FrameSequence constant_sequence(Index frames, Index c, Index h, Index w, float value)
{
    FrameSequence seq;
    for (Index f = 0; f < frames; ++f)
        seq.frames.emplace_back(Shape{c, h, w}, value);
    return seq;
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

Moments moments(const TensorF& t, double offset)
{
    double s = 0.0, s2 = 0.0;
    for (Index i = 0; i < t.size(); ++i) {
        const double d = double(t.data()[i]) - offset;
        s += d;
        s2 += d * d;
    }
    const double n = double(t.size());
    return {s / n, s2 / n - (s / n) * (s / n)};
}

std::string file_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("gaussian noise")
{
    SUBCASE("sigma 0 is the identity")
    {
        std::mt19937_64 rng(1);
        FrameSequence seq;
        seq.frames.push_back(testing::random_tensor<float>({3, 8, 8}, rng, 0.0, 1.0));
        const FrameSequence out = add_gaussian(seq, 0.0, 5);
        CHECK((out.frames[0].values() == seq.frames[0].values()).all());
    }

    SUBCASE("pre-clip statistics on mid-gray")
    {
        const FrameSequence gray = constant_sequence(1, 1, 256, 256, 0.5f);
        const FrameSequence noisy = apply_noise_unclipped(gray, {NoiseKind::gaussian, 30.0, 30.0, 0.2, 123});
        const Moments m = moments(noisy.frames[0], 0.5);
        const double sigma = 30.0 / 255.0;
        CHECK(std::abs(std::sqrt(m.variance) - sigma) < 0.02 * sigma);
        CHECK(std::abs(m.mean) < 3.0 * sigma / 256.0);
    }

    SUBCASE("seeded, per frame, clipped")
    {
        const FrameSequence gray = constant_sequence(3, 3, 16, 16, 0.9f);
        const FrameSequence a = add_gaussian(gray, 50.0, 9);
        const FrameSequence b = add_gaussian(gray, 50.0, 9);
        const FrameSequence c = add_gaussian(gray, 50.0, 10);
        for (std::size_t f = 0; f < 3; ++f) {
            CHECK((a.frames[f].values() == b.frames[f].values()).all());
            CHECK((a.frames[f].values() != c.frames[f].values()).any());
            CHECK(a.frames[f].values().minCoeff() >= 0.0f);
            CHECK(a.frames[f].values().maxCoeff() <= 1.0f);
        }
        CHECK((a.frames[0].values() != a.frames[1].values()).any());
        CHECK((a.frames[1].values() == add_gaussian(gray, 50.0, 9).frames[1].values()).all());
        REQUIRE(a.has_clean());
        CHECK((a.clean[0].values() == 0.9f).all());
    }
}

TEST_CASE("poisson noise")
{
    SUBCASE("zero stays zero")
    {
        const FrameSequence black = constant_sequence(1, 1, 32, 32, 0.0f);
        CHECK((add_poisson(black, 30.0, 1).frames[0].values() == 0.0f).all());
    }

    SUBCASE("mean and variance at lambda 30")
    {
        const FrameSequence gray = constant_sequence(1, 1, 256, 256, 0.5f);
        const FrameSequence noisy = apply_noise_unclipped(gray, {NoiseKind::poisson, 0.0, 30.0, 0.0, 77});
        const Moments m = moments(noisy.frames[0], 0.0);
        CHECK(std::abs(m.mean - 0.5) < 0.01 * 0.5);
        CHECK(std::abs(m.variance - 0.5 / 30.0) < 0.1 * 0.5 / 30.0);
    }

    SUBCASE("high rate concentrates")
    {
        std::mt19937_64 rng(2);
        FrameSequence seq;
        seq.frames.push_back(testing::random_tensor<float>({1, 128, 128}, rng, 0.0, 1.0));
        const FrameSequence out = add_poisson(seq, 10000.0, 3);
        CHECK((out.frames[0].values() - seq.frames[0].values()).abs().maxCoeff() < 0.05f);
    }
}

TEST_CASE("impulse noise")
{
    std::mt19937_64 rng(4);
    FrameSequence seq;
    seq.frames.push_back(testing::random_tensor<float>({3, 256, 256}, rng, 0.05, 0.95));

    CHECK((add_impulse(seq, 0.0, 1).frames[0].values() == seq.frames[0].values()).all());

    const TensorF all = add_impulse(seq, 1.0, 1).frames[0];
    CHECK(((all.values() == 0.0f) || (all.values() == 1.0f)).all());

    const TensorF out = add_impulse(seq, 0.2, 8).frames[0];
    const Index hw = 256 * 256;
    Index corrupted = 0, salt = 0;
    for (Index p = 0; p < hw; ++p) {
        const float v = out.data()[p];
        if (v == 0.0f || v == 1.0f) {
            ++corrupted;
            salt += v == 1.0f;
            // All channels of a corrupted pixel take the same extreme.
            CHECK(out.data()[hw + p] == v);
            CHECK(out.data()[2 * hw + p] == v);
        }
    }
    const double fraction = double(corrupted) / double(hw);
    CHECK(std::abs(fraction - 0.2) < 0.01);
    CHECK(std::abs(double(salt) / double(corrupted) - 0.5) < 0.03);
}

TEST_CASE("noise spec validation")
{
    CHECK(parse_noise_kind("poisson") == NoiseKind::poisson);
    CHECK_THROWS_AS(parse_noise_kind("speckle"), std::invalid_argument);
    CHECK_THROWS_AS((NoiseSpec{NoiseKind::gaussian, -1.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((NoiseSpec{NoiseKind::poisson, 0.0, 0.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((NoiseSpec{NoiseKind::impulse, 0.0, 1.0, 1.5}.validate()), std::invalid_argument);
    CHECK((NoiseSpec{NoiseKind::impulse, 0.0, 1.0, 0.3}.parameter()) == 0.3);
}

TEST_CASE("png frames")
{
    const fs::path dir = testing::scratch_dir("png");
    std::mt19937_64 rng(5);
    for (Index c : {1, 3}) {
        const TensorF frame = testing::random_tensor<float>({c, 5, 7}, rng, -0.2, 1.2);
        const fs::path path = dir / ("f" + std::to_string(c) + ".png");
        write_png(frame, path);
        const TensorF back = read_png(path);
        REQUIRE(back.shape() == frame.shape());
        for (Index i = 0; i < frame.size(); ++i) {
            CHECK(back.data()[i] == quantize8(frame.data()[i]));
            CHECK(std::abs(back.data()[i] - std::clamp(frame.data()[i], 0.0f, 1.0f)) <= 0.5f / 255.0f + 1e-6f);
        }
    }
    CHECK_THROWS_AS(write_png(TensorF({2, 4, 4}), dir / "bad.png"), ShapeError);
    CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
}

TEST_CASE("load_frames names the first gap")
{
    const fs::path dir = testing::scratch_dir("gap");
    const TensorF f({1, 4, 4}, 0.5f);
    write_png(f, dir / frame_filename(0));
    write_png(f, dir / frame_filename(1));
    write_png(f, dir / frame_filename(3));
    CHECK(frame_filename(12) == "frame_00012.png");
    try {
        load_frames(dir);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("frame_00002.png") != std::string::npos);
    }
    CHECK_THROWS_AS(load_frames(testing::scratch_dir("empty")), IoError);
}

TEST_CASE("freeze_dataset")
{
    std::mt19937_64 rng(6);
    FrameSequence clean;
    for (int f = 0; f < 4; ++f)
        clean.frames.push_back(testing::random_tensor<float>({3, 12, 10}, rng, 0.0, 1.0));
    const NoiseSpec spec{NoiseKind::gaussian, 30.0, 30.0, 0.2, 31};

    const fs::path a = testing::scratch_dir("freeze_a"), b = testing::scratch_dir("freeze_b");
    const NoiseManifest m = freeze_dataset(clean, spec, a);
    freeze_dataset(clean, spec, b);

    SUBCASE("loaded frames equal the quantized corruption")
    {
        const FrameSequence expected = apply_noise(clean, spec);
        const auto loaded = load_frames(a);
        REQUIRE(loaded.size() == 4);
        for (std::size_t f = 0; f < 4; ++f)
            for (Index i = 0; i < loaded[f].size(); ++i)
                CHECK(loaded[f].data()[i] == quantize8(expected.frames[f].data()[i]));
        // Saving what was loaded and loading again is exact.
        const fs::path c = testing::scratch_dir("freeze_c");
        save_frames(loaded, c);
        const auto again = load_frames(c);
        for (std::size_t f = 0; f < 4; ++f)
            CHECK((again[f].values() == loaded[f].values()).all());
    }

    SUBCASE("manifest")
    {
        CHECK(m.frames == 4);
        CHECK(m.channels == 3);
        const NoiseManifest r = read_manifest(a);
        CHECK(r.spec.kind == NoiseKind::gaussian);
        CHECK(r.spec.sigma == 30.0);
        CHECK(r.spec.seed == 31);
        CHECK(r.frames == 4);
        CHECK(r.channels == 3);
        CHECK(r.height == 12);
        CHECK(r.width == 10);
        const KeyValues kv = read_key_values(a / kManifestName);
        CHECK(kv.get("kind") == "gaussian");
        CHECK(kv.get("parameter") == "30");
    }

    SUBCASE("same seed, same bytes")
    {
        for (const char* name : {"frame_00000.png", "frame_00003.png", kManifestName})
            CHECK(file_bytes(a / name) == file_bytes(b / name));
    }
}
