#include "cbvd/trainer.hpp"

#include "cbvd/losses.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cbvd {

namespace {

struct KeyCodec {
    const char* name;
    std::string (*get)(const TrainConfig&);
    void (*set)(TrainConfig&, const std::string&);
    bool extent;
};

#define CBVD_INT_KEY(key, field, extent)                                                                               \
    KeyCodec                                                                                                           \
    {                                                                                                                  \
        key, [](const TrainConfig& c) { return std::to_string(c.field); },                                             \
            [](TrainConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(parse_int(v, key)); }, \
            extent                                                                                                     \
    }
#define CBVD_REAL_KEY(key, field)                                                                                      \
    KeyCodec                                                                                                           \
    {                                                                                                                  \
        key, [](const TrainConfig& c) { return format_double(c.field); },                                              \
            [](TrainConfig& c, const std::string& v) { c.field = parse_double(v, key); }, false                         \
    }

const std::vector<KeyCodec>& codecs()
{
    static const std::vector<KeyCodec> table{
        CBVD_INT_KEY("K", radius, false),
        CBVD_INT_KEY("L", levels, false),
        KeyCodec{"append_raw", [](const TrainConfig& c) { return std::string(c.append_raw ? "true" : "false"); },
                 [](TrainConfig& c, const std::string& v) { c.append_raw = parse_bool(v, "append_raw"); }, false},
        CBVD_REAL_KEY("lambda1", lambda1),
        CBVD_REAL_KEY("lambda2", lambda2),
        CBVD_REAL_KEY("lambda3", lambda3),
        CBVD_REAL_KEY("lr1", lr1),
        CBVD_REAL_KEY("lr2", lr2),
        CBVD_INT_KEY("lr_decay_every", lr_decay_every, false),
        CBVD_REAL_KEY("lr_decay_factor", lr_decay_factor),
        CBVD_INT_KEY("epochs_stage1", epochs_stage1, false),
        CBVD_INT_KEY("epochs_stage2", epochs_stage2, false),
        KeyCodec{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
                 [](TrainConfig& c, const std::string& v) { c.seed = parse_uint(v, "seed"); }, false},
        CBVD_INT_KEY("c_feat", feat_channels, false),
        CBVD_INT_KEY("feature_width", feature_width, false),
        CBVD_INT_KEY("denoise_width", denoise_width, false),
        CBVD_INT_KEY("denoise_bottleneck", denoise_bottleneck, false),
        KeyCodec{"denoiser", [](const TrainConfig& c) { return to_string(c.denoiser); },
                 [](TrainConfig& c, const std::string& v) { c.denoiser = parse_denoiser_layout(v); }, false},
        CBVD_INT_KEY("refine_width", refine_width, false),
        CBVD_INT_KEY("refine_hidden", refine_hidden, false),
        CBVD_REAL_KEY("omega0", omega0),
        CBVD_REAL_KEY("bn_eps", bn_eps),
        CBVD_INT_KEY("c_in", in_channels, true),
        CBVD_INT_KEY("height", height, true),
        CBVD_INT_KEY("width", width, true),
        CBVD_INT_KEY("frames", frames, true),
    };
    return table;
}

#undef CBVD_INT_KEY
#undef CBVD_REAL_KEY

} // namespace

std::string to_string(DenoiserLayout layout) { return layout == DenoiserLayout::table ? "table" : "six_layer"; }

DenoiserLayout parse_denoiser_layout(const std::string& name)
{
    if (name == "table")
        return DenoiserLayout::table;
    if (name == "six_layer")
        return DenoiserLayout::six_layer;
    throw std::invalid_argument("unknown denoiser layout '" + name + "' (expected table or six_layer)");
}

std::string to_string(Stage stage) { return stage == Stage::after_stage1 ? "after_stage1" : "after_stage2"; }

Stage parse_stage(const std::string& name)
{
    if (name == "after_stage1")
        return Stage::after_stage1;
    if (name == "after_stage2")
        return Stage::after_stage2;
    throw std::invalid_argument("unknown checkpoint stage '" + name + "'");
}

OutputStage parse_output_stage(const std::string& name)
{
    if (name == "denoiser")
        return OutputStage::denoiser;
    if (name == "refined")
        return OutputStage::refined;
    throw std::invalid_argument("unknown output stage '" + name + "' (expected denoiser or refined)");
}

const std::vector<std::string>& train_config_keys()
{
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& c : codecs())
            if (!c.extent)
                k.emplace_back(c.name);
        return k;
    }();
    return keys;
}

bool is_extent_key(const std::string& key)
{
    for (const auto& c : codecs())
        if (c.extent && key == c.name)
            return true;
    return false;
}

NetworkConfig TrainConfig::network() const
{
    NetworkConfig n;
    n.in_channels = in_channels;
    n.feat_channels = feat_channels;
    n.window = window();
    n.levels = levels;
    n.append_raw = append_raw;
    n.feature_width = feature_width;
    n.denoise_width = denoise_width;
    n.denoise_bottleneck = denoise_bottleneck;
    n.denoiser = denoiser;
    n.refine_width = refine_width;
    n.refine_hidden = refine_hidden;
    n.omega0 = omega0;
    n.bn_eps = bn_eps;
    return n;
}

double TrainConfig::learning_rate(double base, int epoch) const
{
    return base * std::pow(lr_decay_factor, epoch / lr_decay_every);
}

void TrainConfig::validate() const
{
    if (radius < 0)
        throw std::invalid_argument("config: K must be >= 0");
    if (!(lr1 > 0.0) || !(lr2 > 0.0) || !(lr_decay_factor > 0.0))
        throw std::invalid_argument("config: learning rates and decay factor must be positive");
    if (lr_decay_every <= 0)
        throw std::invalid_argument("config: lr_decay_every must be positive");
    if (epochs_stage1 < 0 || epochs_stage2 < 0)
        throw std::invalid_argument("config: epoch counts must be >= 0");
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw std::invalid_argument("config: loss weights must be >= 0");
    if (feat_channels < 0)
        throw std::invalid_argument("config: c_feat must be >= 0");
    network().validate();
}

KeyValues TrainConfig::to_key_values() const
{
    KeyValues kv;
    for (const auto& c : codecs())
        kv.set(c.name, c.get(*this));
    return kv;
}

bool TrainConfig::apply(const std::string& key, const std::string& value)
{
    for (const auto& c : codecs())
        if (key == c.name) {
            c.set(*this, value);
            return true;
        }
    return false;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv)
{
    TrainConfig cfg;
    for (const auto& [k, v] : kv.entries())
        if (!cfg.apply(k, v))
            throw std::invalid_argument("unknown training key '" + k + "'");
    return cfg;
}

NetworkParams<float> clone(const NetworkParams<float>& params)
{
    NetworkParams<float> out = params;
    auto deep = [](Tensor<float>& t) { t = t.clone(t.requires_grad()); };
    for (auto& c : out.feature.convs) {
        deep(c.weight);
        deep(c.bias);
    }
    for (auto& t : out.feature.bn_gamma)
        deep(t);
    for (auto& t : out.feature.bn_beta)
        deep(t);
    for (auto& c : out.denoise.convs) {
        deep(c.weight);
        deep(c.bias);
    }
    for (auto& l : out.refine.layers) {
        deep(l.weight);
        deep(l.bias);
    }
    return out;
}

ParameterList<float> stage1_parameters(const NetworkParams<float>& params)
{
    ParameterList<float> out = parameters(params.feature);
    for (auto& p : parameters(params.denoise))
        out.push_back(std::move(p));
    return out;
}

ParameterList<float> stage2_parameters(const NetworkParams<float>& params) { return parameters(params.refine); }

std::vector<Index> window_indices(Index frames, Index center, int radius)
{
    if (frames <= 0)
        throw ContractError("build_batch: empty sequence");
    if (center < 0 || center >= frames)
        throw std::out_of_range("build_batch: center " + std::to_string(center) + " outside [0, "
                                + std::to_string(frames) + ")");
    std::vector<Index> out;
    const Index period = 2 * (frames - 1);
    for (Index i = center - radius; i <= center + radius; ++i) {
        if (frames == 1) {
            out.push_back(0);
            continue;
        }
        Index r = ((i % period) + period) % period;
        if (r >= frames)
            r = period - r;
        out.push_back(r);
    }
    return out;
}

Batch build_batch(const FrameSequence& seq, Index center, int radius)
{
    Batch b;
    b.indices = window_indices(seq.size(), center, radius);
    for (Index i : b.indices) {
        b.grids.push_back(make_grid(seq.height(), seq.width(), i, seq.size()));
        b.noisy.push_back(seq.frames[static_cast<std::size_t>(i)]);
    }
    b.center = seq.frames[static_cast<std::size_t>(center)];
    return b;
}

std::string format_epoch_log(const EpochLog& log)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch=%d stage=%d loss=%.9g lr=%.9g", log.epoch, log.stage, log.mean_loss, log.lr);
    return buf;
}

void check_compatible(const Checkpoint& ckpt, const FrameSequence& seq)
{
    const TrainConfig& c = ckpt.config;
    if (seq.empty())
        throw ShapeError("sequence is empty");
    if (seq.channels() != c.in_channels || seq.height() != c.height || seq.width() != c.width
        || seq.size() != c.frames)
        throw ShapeError("checkpoint was fit on " + std::to_string(c.frames) + " frames of "
                         + std::to_string(c.in_channels) + "x" + std::to_string(c.height) + "x"
                         + std::to_string(c.width) + ", got " + std::to_string(seq.size()) + " frames of "
                         + std::to_string(seq.channels()) + "x" + std::to_string(seq.height()) + "x"
                         + std::to_string(seq.width()));
}

namespace {

// Everything about a sequence that stays fixed while fitting it.
struct SequenceCache {
    std::vector<EncodedGrid<float>> encoded; // per frame
    std::vector<CoordGrid> grids;            // per frame
    std::vector<TensorF> center;             // per frame, [1, C, H, W]
    std::vector<TensorF> noisy_window;       // per center, [B, C, H, W]
    std::vector<std::vector<Index>> windows; // per center
};

SequenceCache build_cache(const FrameSequence& seq, const TrainConfig& cfg)
{
    SequenceCache cache;
    const Index n = seq.size();
    for (Index t = 0; t < n; ++t) {
        cache.grids.push_back(make_grid(seq.height(), seq.width(), t, n));
        cache.encoded.push_back(encode<float>(cache.grids.back(), cfg.levels, cfg.append_raw));
        const TensorF& f = seq.frames[static_cast<std::size_t>(t)];
        cache.center.push_back(TensorF::from({1, f.dim(0), f.dim(1), f.dim(2)}, f.values()));
    }
    for (Index t = 0; t < n; ++t) {
        const Batch batch = build_batch(seq, t, cfg.radius);
        cache.windows.push_back(batch.indices);
        cache.noisy_window.push_back(stack(batch.noisy));
    }
    return cache;
}

TensorF encoded_window(const SequenceCache& cache, Index t)
{
    std::vector<const EncodedGrid<float>*> grids;
    for (Index i : cache.windows[static_cast<std::size_t>(t)])
        grids.push_back(&cache.encoded[static_cast<std::size_t>(i)]);
    return channels_first(grids);
}

TrainConfig with_extents(TrainConfig cfg, const FrameSequence& seq)
{
    seq.validate();
    cfg.in_channels = seq.channels();
    cfg.height = seq.height();
    cfg.width = seq.width();
    cfg.frames = seq.size();
    cfg.validate();
    return cfg;
}

void check_finite_loss(double loss, int stage, int epoch, Index t)
{
    if (!std::isfinite(loss))
        throw NumericError("stage " + std::to_string(stage) + ": non-finite loss at epoch " + std::to_string(epoch)
                           + ", center frame " + std::to_string(t) + "; last good epoch "
                           + (epoch > 0 ? std::to_string(epoch - 1) : std::string("none")));
}

} // namespace

Checkpoint train_stage1(const FrameSequence& seq, TrainConfig cfg, const EpochCallback& on_epoch)
{
    cfg = with_extents(cfg, seq);
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.stage = Stage::after_stage1;
    ckpt.params = init_params<float>(cfg.network(), cfg.seed);
    ParameterList<float> params = stage1_parameters(ckpt.params);
    ckpt.adam1 = make_adam_state(params, cfg.lr1);
    ckpt.adam2 = make_adam_state(stage2_parameters(ckpt.params), cfg.lr2);

    const SequenceCache cache = build_cache(seq, cfg);
    const NetworkConfig net = cfg.network();
    const float lambda1 = static_cast<float>(cfg.lambda1);
    for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        ckpt.adam1.lr = cfg.learning_rate(cfg.lr1, epoch);
        double total = 0.0;
        for (Index t = 0; t < seq.size(); ++t) {
            const TensorF features = feature_forward(ckpt.params.feature, encoded_window(cache, t));
            const TensorF denoised = denoise_forward(ckpt.params.denoise, features);
            const TensorF loss = stage1_loss(denoised, cache.center[static_cast<std::size_t>(t)], features,
                                             cache.noisy_window[static_cast<std::size_t>(t)], lambda1,
                                             net.central_begin());
            check_finite_loss(loss.item(), 1, epoch, t);
            total += loss.item();
            backward(loss);
            adam_step(params, ckpt.adam1);
        }
        if (on_epoch)
            on_epoch({epoch, 1, total / static_cast<double>(seq.size()), ckpt.adam1.lr});
    }
    return ckpt;
}

Checkpoint train_stage2(const FrameSequence& seq, const Checkpoint& input, const EpochCallback& on_epoch)
{
    if (input.stage != Stage::after_stage1)
        throw ContractError("train_stage2: checkpoint is " + to_string(input.stage) + ", expected after_stage1");
    check_compatible(input, seq);
    const TrainConfig& cfg = input.config;

    Checkpoint ckpt = input;
    ckpt.params = clone(input.params);
    ckpt.stage = Stage::after_stage2;
    ParameterList<float> params = stage2_parameters(ckpt.params);
    ckpt.adam2 = make_adam_state(params, cfg.lr2);

    const SequenceCache cache = build_cache(seq, cfg);
    std::vector<TensorF> denoised;
    {
        NoGradGuard no_grad;
        for (Index t = 0; t < seq.size(); ++t)
            denoised.push_back(denoise_forward(ckpt.params.denoise, feature_forward(ckpt.params.feature,
                                                                                    encoded_window(cache, t))));
    }

    const float lambda2 = static_cast<float>(cfg.lambda2), lambda3 = static_cast<float>(cfg.lambda3);
    for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        ckpt.adam2.lr = cfg.learning_rate(cfg.lr2, epoch);
        double total = 0.0;
        for (Index t = 0; t < seq.size(); ++t) {
            const auto i = static_cast<std::size_t>(t);
            const TensorF refined = refine_forward(ckpt.params.refine, cache.grids[i]);
            const TensorF loss = stage2_loss(refined, cache.center[i], denoised[i], lambda2, lambda3);
            check_finite_loss(loss.item(), 2, epoch, t);
            total += loss.item();
            backward(loss);
            adam_step(params, ckpt.adam2);
        }
        if (on_epoch)
            on_epoch({epoch, 2, total / static_cast<double>(seq.size()), ckpt.adam2.lr});
    }
    return ckpt;
}

FrameSequence denoise_sequence(const Checkpoint& ckpt, const FrameSequence& seq, OutputStage stage)
{
    if (stage == OutputStage::refined && ckpt.stage != Stage::after_stage2)
        throw ContractError("denoise_sequence: refined output needs an after_stage2 checkpoint, got "
                            + to_string(ckpt.stage));
    seq.validate();
    check_compatible(ckpt, seq);
    NoGradGuard no_grad;
    FrameSequence out;
    out.clean = seq.clean;
    const SequenceCache cache = build_cache(seq, ckpt.config);
    for (Index t = 0; t < seq.size(); ++t) {
        TensorF image;
        if (stage == OutputStage::denoiser)
            image = denoise_forward(ckpt.params.denoise, feature_forward(ckpt.params.feature, encoded_window(cache, t)));
        else
            image = refine_forward(ckpt.params.refine, cache.grids[static_cast<std::size_t>(t)]);
        TensorF frame = TensorF::from({image.dim(1), image.dim(2), image.dim(3)}, image.values().max(0.0f).min(1.0f));
        out.frames.push_back(std::move(frame));
    }
    return out;
}

} // namespace cbvd
