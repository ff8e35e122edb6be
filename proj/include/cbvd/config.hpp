#pragma once

#include "cbvd/keyvalue.hpp"
#include "cbvd/noise.hpp"
#include "cbvd/trainer.hpp"

#include <filesystem>
#include <string>

namespace cbvd {

/**
 * Everything a command can be configured with. Precedence is built-in
 * defaults, then the config file, then command-line overrides.
 *
 * `preset=appendix|main_text` selects a loss-weight / decay bundle and is
 * applied before any other key from the same source, so explicit keys win.
 */
struct RunConfig {
    TrainConfig train;
    NoiseSpec noise;
    std::string input_dir;
    std::string output_dir;
    std::string checkpoint;

    /// Throws std::invalid_argument naming an unknown key or a bad value.
    void apply(const std::string& key, const std::string& value);
    void apply(const KeyValues& kv);
    /// Fully resolved keys; loading this back yields an equal config.
    KeyValues to_key_values() const;

    static RunConfig load(const std::filesystem::path& path);

    bool operator==(const RunConfig& other) const;
};

void apply_preset(TrainConfig& cfg, const std::string& name);

/// Writes the resolved config to `path` with a provenance header.
void echo_config(const RunConfig& cfg, const std::filesystem::path& path);

inline constexpr const char* kResolvedConfigName = "resolved_config.txt";

} // namespace cbvd
