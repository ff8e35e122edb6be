#include "cbvd/keyvalue.hpp"

#include "cbvd/frames.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace cbvd {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace

void KeyValues::set(const std::string& key, std::string value)
{
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = std::move(value);
            return;
        }
    entries_.emplace_back(key, std::move(value));
}

bool KeyValues::has(const std::string& key) const
{
    for (const auto& [k, v] : entries_)
        if (k == key)
            return true;
    return false;
}

const std::string& KeyValues::get(const std::string& key) const
{
    for (const auto& [k, v] : entries_)
        if (k == key)
            return v;
    throw std::invalid_argument("missing key '" + key + "'");
}

KeyValues parse_key_values(const std::string& text, const std::string& origin)
{
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
            throw std::invalid_argument(origin + ":" + std::to_string(number) + ": expected key=value, got '" + line
                                        + "'");
        kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

std::string render_key_values(const KeyValues& kv, const std::string& header)
{
    std::string out;
    if (!header.empty())
        out += "# " + header + "\n";
    for (const auto& [k, v] : kv.entries())
        out += k + "=" + v + "\n";
    return out;
}

KeyValues read_key_values(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_key_values(buf.str(), path.string());
}

void write_key_values(const KeyValues& kv, const fs::path& path, const std::string& header)
{
    std::ofstream out(path, std::ios::binary);
    out << render_key_values(kv, header);
    if (!out)
        throw IoError("cannot write " + path.string());
}

std::string format_double(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_double(const std::string& text, const std::string& key)
{
    double v = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw std::invalid_argument("key '" + key + "': '" + text + "' is not a number");
    return v;
}

std::uint64_t parse_uint(const std::string& text, const std::string& key)
{
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw std::invalid_argument("key '" + key + "': '" + text + "' is not a non-negative integer");
    return v;
}

std::int64_t parse_int(const std::string& text, const std::string& key)
{
    std::int64_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw std::invalid_argument("key '" + key + "': '" + text + "' is not an integer");
    return v;
}

bool parse_bool(const std::string& text, const std::string& key)
{
    if (text == "true" || text == "1" || text == "on")
        return true;
    if (text == "false" || text == "0" || text == "off")
        return false;
    throw std::invalid_argument("key '" + key + "': '" + text + "' is not a boolean");
}

} // namespace cbvd
