#pragma once

#include "cbvd/frames.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace cbvd {

enum class NoiseKind { gaussian, poisson, impulse };

std::string to_string(NoiseKind kind);
/// Throws std::invalid_argument for anything but gaussian|poisson|impulse.
NoiseKind parse_noise_kind(const std::string& name);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian;
    double sigma = 30.0;  // 8-bit units
    double lambda = 30.0; // peak photon count
    double alpha = 0.2;   // corrupted-pixel fraction
    std::uint64_t seed = 0;

    /// The one parameter that matters for `kind`.
    double parameter() const;
    void validate() const;
};

// Each frame draws from its own stream seeded by (seed, frame index), so the
// result does not depend on processing order.

/// clip(x + n, 0, 1), n ~ Normal(0, (sigma/255)^2).
FrameSequence add_gaussian(const FrameSequence& frames, double sigma, std::uint64_t seed);
/// clip(Poisson(x * lambda) / lambda, 0, 1).
FrameSequence add_poisson(const FrameSequence& frames, double lambda, std::uint64_t seed);
/// Each pixel (all channels together) replaced with probability alpha by 0 or 1, evenly split.
FrameSequence add_impulse(const FrameSequence& frames, double alpha, std::uint64_t seed);

/// Dispatches on spec.kind. The clean ground truth of the result is the input frames.
FrameSequence apply_noise(const FrameSequence& clean, const NoiseSpec& spec);

/// The same draws as apply_noise without the final clip (impulse is unaffected by clipping).
FrameSequence apply_noise_unclipped(const FrameSequence& clean, const NoiseSpec& spec);

struct NoiseManifest {
    NoiseSpec spec;
    Index frames = 0;
    Index channels = 0;
    Index height = 0;
    Index width = 0;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Corrupts once and writes frame_%05d.png plus manifest.txt. Training reads
/// these files back instead of re-noising.
NoiseManifest freeze_dataset(const FrameSequence& clean, const NoiseSpec& spec, const std::filesystem::path& out_dir);

NoiseManifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const NoiseManifest& manifest, const std::filesystem::path& dir);

} // namespace cbvd
