#include "cbvd/noise.hpp"

#include "cbvd/keyvalue.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace cbvd {

std::string to_string(NoiseKind kind)
{
    switch (kind) {
    case NoiseKind::gaussian:
        return "gaussian";
    case NoiseKind::poisson:
        return "poisson";
    case NoiseKind::impulse:
        return "impulse";
    }
    return "unknown";
}

NoiseKind parse_noise_kind(const std::string& name)
{
    if (name == "gaussian")
        return NoiseKind::gaussian;
    if (name == "poisson")
        return NoiseKind::poisson;
    if (name == "impulse")
        return NoiseKind::impulse;
    throw std::invalid_argument("unknown noise kind '" + name + "' (expected gaussian, poisson or impulse)");
}

double NoiseSpec::parameter() const
{
    switch (kind) {
    case NoiseKind::gaussian:
        return sigma;
    case NoiseKind::poisson:
        return lambda;
    case NoiseKind::impulse:
        return alpha;
    }
    return 0.0;
}

void NoiseSpec::validate() const
{
    if (!(sigma >= 0.0))
        throw std::invalid_argument("noise: sigma must be >= 0");
    if (!(lambda > 0.0))
        throw std::invalid_argument("noise: lambda must be > 0");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("noise: alpha must lie in [0, 1]");
}

namespace {

std::mt19937_64 frame_rng(std::uint64_t seed, Index frame, NoiseKind kind)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(frame), static_cast<std::uint32_t>(kind)};
    return std::mt19937_64(seq);
}

void clip(TensorF& frame) { frame.values() = frame.values().max(0.0f).min(1.0f); }

FrameSequence perturb(const FrameSequence& input, const NoiseSpec& spec, bool clipped)
{
    spec.validate();
    FrameSequence out;
    out.clean = input.clean;
    for (Index f = 0; f < input.size(); ++f) {
        auto rng = frame_rng(spec.seed, f, spec.kind);
        TensorF frame = input.frames[static_cast<std::size_t>(f)].clone();
        auto& v = frame.values();
        switch (spec.kind) {
        case NoiseKind::gaussian: {
            std::normal_distribution<double> normal(0.0, spec.sigma / 255.0);
            if (spec.sigma > 0.0)
                for (Index i = 0; i < v.size(); ++i)
                    v[i] = static_cast<float>(v[i] + normal(rng));
            break;
        }
        case NoiseKind::poisson:
            for (Index i = 0; i < v.size(); ++i) {
                const double rate = std::max(0.0, double(v[i]) * spec.lambda);
                if (rate == 0.0) {
                    v[i] = 0.0f;
                    continue;
                }
                std::poisson_distribution<long long> poisson(rate);
                v[i] = static_cast<float>(static_cast<double>(poisson(rng)) / spec.lambda);
            }
            break;
        case NoiseKind::impulse: {
            const Index channels = frame.dim(0), hw = frame.dim(1) * frame.dim(2);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (Index p = 0; p < hw; ++p) {
                const bool hit = unit(rng) < spec.alpha;
                const bool salt = unit(rng) < 0.5;
                if (hit)
                    for (Index c = 0; c < channels; ++c)
                        v[c * hw + p] = salt ? 1.0f : 0.0f;
            }
            break;
        }
        }
        if (clipped)
            clip(frame);
        out.frames.push_back(std::move(frame));
    }
    return out;
}

} // namespace

FrameSequence add_gaussian(const FrameSequence& frames, double sigma, std::uint64_t seed)
{
    return apply_noise(frames, {NoiseKind::gaussian, sigma, 30.0, 0.0, seed});
}

FrameSequence add_poisson(const FrameSequence& frames, double lambda, std::uint64_t seed)
{
    return apply_noise(frames, {NoiseKind::poisson, 0.0, lambda, 0.0, seed});
}

FrameSequence add_impulse(const FrameSequence& frames, double alpha, std::uint64_t seed)
{
    return apply_noise(frames, {NoiseKind::impulse, 0.0, 30.0, alpha, seed});
}

FrameSequence apply_noise(const FrameSequence& clean, const NoiseSpec& spec)
{
    FrameSequence out = perturb(clean, spec, true);
    out.clean = clean.frames;
    return out;
}

FrameSequence apply_noise_unclipped(const FrameSequence& clean, const NoiseSpec& spec)
{
    FrameSequence out = perturb(clean, spec, false);
    out.clean = clean.frames;
    return out;
}

void write_manifest(const NoiseManifest& m, const fs::path& dir)
{
    KeyValues kv;
    kv.set("kind", to_string(m.spec.kind));
    kv.set("parameter", format_double(m.spec.parameter()));
    kv.set("sigma", format_double(m.spec.sigma));
    kv.set("lambda", format_double(m.spec.lambda));
    kv.set("alpha", format_double(m.spec.alpha));
    kv.set("seed", std::to_string(m.spec.seed));
    kv.set("frames", std::to_string(m.frames));
    kv.set("channels", std::to_string(m.channels));
    kv.set("height", std::to_string(m.height));
    kv.set("width", std::to_string(m.width));
    write_key_values(kv, dir / kManifestName, "frozen noisy dataset");
}

NoiseManifest read_manifest(const fs::path& dir)
{
    const KeyValues kv = read_key_values(dir / kManifestName);
    NoiseManifest m;
    m.spec.kind = parse_noise_kind(kv.get("kind"));
    m.spec.sigma = parse_double(kv.get("sigma"), "sigma");
    m.spec.lambda = parse_double(kv.get("lambda"), "lambda");
    m.spec.alpha = parse_double(kv.get("alpha"), "alpha");
    m.spec.seed = parse_uint(kv.get("seed"), "seed");
    m.frames = static_cast<Index>(parse_uint(kv.get("frames"), "frames"));
    m.channels = static_cast<Index>(parse_uint(kv.get("channels"), "channels"));
    m.height = static_cast<Index>(parse_uint(kv.get("height"), "height"));
    m.width = static_cast<Index>(parse_uint(kv.get("width"), "width"));
    return m;
}

NoiseManifest freeze_dataset(const FrameSequence& clean, const NoiseSpec& spec, const fs::path& out_dir)
{
    clean.validate();
    const FrameSequence noisy = apply_noise(clean, spec);
    save_frames(noisy.frames, out_dir);
    NoiseManifest m{spec, clean.size(), clean.channels(), clean.height(), clean.width()};
    write_manifest(m, out_dir);
    return m;
}

} // namespace cbvd
