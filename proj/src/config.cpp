#include "cbvd/config.hpp"

#include <stdexcept>

namespace fs = std::filesystem;

namespace cbvd {

void apply_preset(TrainConfig& cfg, const std::string& name)
{
    if (name == "appendix") {
        cfg.lambda1 = 1.0;
        cfg.lambda2 = 0.1;
        cfg.lambda3 = 1.0;
        cfg.lr_decay_every = 1000;
    } else if (name == "main_text") {
        cfg.lambda1 = 0.1;
        cfg.lambda2 = 1.0;
        cfg.lambda3 = 1.0;
        cfg.lr_decay_every = 100;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "' (expected appendix or main_text)");
    }
}

void RunConfig::apply(const std::string& key, const std::string& value)
{
    if (key == "preset")
        apply_preset(train, value);
    else if (key == "noise")
        noise.kind = parse_noise_kind(value);
    else if (key == "sigma")
        noise.sigma = parse_double(value, key);
    else if (key == "lambda")
        noise.lambda = parse_double(value, key);
    else if (key == "alpha")
        noise.alpha = parse_double(value, key);
    else if (key == "noise_seed")
        noise.seed = parse_uint(value, key);
    else if (key == "input_dir")
        input_dir = value;
    else if (key == "output_dir")
        output_dir = value;
    else if (key == "checkpoint")
        checkpoint = value;
    else if (is_extent_key(key) || !train.apply(key, value))
        throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::apply(const KeyValues& kv)
{
    if (kv.has("preset"))
        apply("preset", kv.get("preset"));
    for (const auto& [k, v] : kv.entries())
        if (k != "preset")
            apply(k, v);
}

KeyValues RunConfig::to_key_values() const
{
    KeyValues kv;
    const KeyValues trained = train.to_key_values();
    for (const auto& [k, v] : trained.entries())
        if (!is_extent_key(k))
            kv.set(k, v);
    kv.set("noise", to_string(noise.kind));
    kv.set("sigma", format_double(noise.sigma));
    kv.set("lambda", format_double(noise.lambda));
    kv.set("alpha", format_double(noise.alpha));
    kv.set("noise_seed", std::to_string(noise.seed));
    kv.set("input_dir", input_dir);
    kv.set("output_dir", output_dir);
    kv.set("checkpoint", checkpoint);
    return kv;
}

RunConfig RunConfig::load(const fs::path& path)
{
    RunConfig cfg;
    cfg.apply(read_key_values(path));
    return cfg;
}

bool RunConfig::operator==(const RunConfig& other) const { return to_key_values() == other.to_key_values(); }

void echo_config(const RunConfig& cfg, const fs::path& path)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    write_key_values(cfg.to_key_values(), path, "resolved configuration");
}

} // namespace cbvd
