#pragma once

// Ordered key=value text with '#' comments. Shared by run configs, noise
// manifests and the config snapshot embedded in checkpoints.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cbvd {

class KeyValues {
public:
    void set(const std::string& key, std::string value);
    bool has(const std::string& key) const;
    /// Throws std::invalid_argument naming the missing key.
    const std::string& get(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    bool operator==(const KeyValues&) const = default;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Parses text; a malformed line throws std::invalid_argument with `origin` and the line number.
KeyValues parse_key_values(const std::string& text, const std::string& origin);
std::string render_key_values(const KeyValues& kv, const std::string& header = {});

KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const KeyValues& kv, const std::filesystem::path& path, const std::string& header = {});

/// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& key);
std::uint64_t parse_uint(const std::string& text, const std::string& key);
std::int64_t parse_int(const std::string& text, const std::string& key);
bool parse_bool(const std::string& text, const std::string& key);

} // namespace cbvd
