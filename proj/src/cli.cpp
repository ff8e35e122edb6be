#include "cbvd/cli.hpp"

#include "cbvd/checkpoint.hpp"
#include "cbvd/noise.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;

namespace cbvd {

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets)
{
    KeyValues kv;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("--set expects key=value, got '" + s + "'");
        kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    cfg.apply(kv);
}

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& sets)
{
    RunConfig cfg;
    if (!config_path.empty())
        cfg = RunConfig::load(config_path);
    apply_overrides(cfg, sets);
    return cfg;
}

FrameSequence load_sequence(const std::string& dir)
{
    FrameSequence seq;
    seq.frames = load_frames(dir);
    seq.validate();
    return seq;
}

// Metadata of the frozen dataset a directory was derived from, when known.
bool find_manifest(const fs::path& dir, NoiseManifest& manifest)
{
    for (const char* name : {"source_manifest.txt", kManifestName}) {
        if (fs::exists(dir / name)) {
            const KeyValues kv = read_key_values(dir / name);
            NoiseManifest m;
            m.spec.kind = parse_noise_kind(kv.get("kind"));
            m.spec.sigma = parse_double(kv.get("sigma"), "sigma");
            m.spec.lambda = parse_double(kv.get("lambda"), "lambda");
            m.spec.alpha = parse_double(kv.get("alpha"), "alpha");
            manifest = m;
            return true;
        }
    }
    return false;
}

class LossLog {
public:
    LossLog(std::ostream& out, const std::string& path) : out_(out)
    {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_)
                throw IoError("cannot open log file " + path);
        }
    }

    void operator()(const EpochLog& log)
    {
        const std::string line = format_epoch_log(log);
        out_ << line << '\n';
        if (file_)
            *file_ << line << '\n';
    }

private:
    std::ostream& out_;
    std::unique_ptr<std::ofstream> file_;
};

int cmd_corrupt(const std::string& input, const std::string& kind, double sigma, double lambda, double alpha,
                std::uint64_t seed, const std::string& out_dir, std::ostream& out)
{
    RunConfig cfg;
    cfg.noise = {parse_noise_kind(kind), sigma, lambda, alpha, seed};
    cfg.noise.validate();
    cfg.input_dir = input;
    cfg.output_dir = out_dir;
    FrameSequence clean;
    clean.frames = load_frames(input);
    const NoiseManifest m = freeze_dataset(clean, cfg.noise, out_dir);
    echo_config(cfg, fs::path(out_dir) / kResolvedConfigName);
    out << "wrote " << m.frames << " " << to_string(m.spec.kind) << " frames (parameter " << m.spec.parameter()
        << ", seed " << m.spec.seed << ") to " << out_dir << '\n';
    return 0;
}

int cmd_train(const std::string& noisy_dir, const std::string& config_path, const std::string& stage,
              const std::string& out_path, const std::string& ckpt_in, const std::vector<std::string>& sets,
              const std::string& log_path, std::ostream& out)
{
    if (stage == "2" && ckpt_in.empty())
        throw UsageError("--stage 2 needs --ckpt with an after_stage1 checkpoint");
    RunConfig cfg = resolve_config(config_path, sets);
    cfg.input_dir = noisy_dir;
    cfg.checkpoint = out_path;
    const FrameSequence seq = load_sequence(noisy_dir);
    LossLog log(out, log_path);
    EpochCallback on_epoch = [&log](const EpochLog& e) { log(e); };

    Checkpoint ckpt;
    if (stage == "2") {
        ckpt = load_checkpoint(ckpt_in);
        ckpt = train_stage2(seq, ckpt, on_epoch);
        cfg.train = ckpt.config;
    } else {
        ckpt = train_stage1(seq, cfg.train, on_epoch);
        if (stage == "both")
            ckpt = train_stage2(seq, ckpt, on_epoch);
    }
    save_checkpoint(ckpt, out_path);
    echo_config(cfg, out_path + ".config.txt");
    return 0;
}

int cmd_denoise(const std::string& ckpt_path, const std::string& noisy_dir, const std::string& stage,
                const std::string& out_dir, std::ostream& out)
{
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const FrameSequence seq = load_sequence(noisy_dir);
    check_compatible(ckpt, seq);
    const FrameSequence result = denoise_sequence(ckpt, seq, parse_output_stage(stage));
    save_frames(result.frames, out_dir);
    RunConfig cfg;
    cfg.train = ckpt.config;
    cfg.input_dir = noisy_dir;
    cfg.output_dir = out_dir;
    cfg.checkpoint = ckpt_path;
    if (fs::exists(fs::path(noisy_dir) / kManifestName)) {
        const NoiseManifest m = read_manifest(noisy_dir);
        cfg.noise = m.spec;
        fs::copy_file(fs::path(noisy_dir) / kManifestName, fs::path(out_dir) / "source_manifest.txt",
                      fs::copy_options::overwrite_existing);
    }
    echo_config(cfg, fs::path(out_dir) / kResolvedConfigName);
    out << "wrote " << result.size() << " " << stage << " frames to " << out_dir << '\n';
    return 0;
}

int cmd_eval(const std::string& denoised_dir, const std::string& clean_dir, const std::string& report_path,
             const std::string& variant, std::ostream& out)
{
    const auto denoised = load_frames(denoised_dir);
    const auto clean = load_frames(clean_dir);
    if (denoised.size() != clean.size())
        throw ShapeError("eval: " + std::to_string(denoised.size()) + " denoised frames but " + std::to_string(clean.size())
                         + " clean frames");
    MetricsReport report = evaluate(denoised, clean);
    report.variant = variant;
    NoiseManifest m;
    if (find_manifest(denoised_dir, m)) {
        report.noise_kind = to_string(m.spec.kind);
        report.noise_param = m.spec.parameter();
    }
    const std::vector<ReportRow> rows{summary_row(report)};
    write_report(rows, report_path);
    std::ofstream frames(report_path + ".frames.csv", std::ios::binary);
    frames << render_per_frame_csv(report);
    RunConfig cfg;
    cfg.input_dir = denoised_dir;
    cfg.output_dir = report_path;
    echo_config(cfg, report_path + ".config.txt");
    out << render_report_table(rows);
    return 0;
}

int cmd_ablate(const std::string& mode, const std::string& noisy_dir, const std::string& clean_dir,
               const std::string& config_path, const std::string& report_path, const std::vector<int>& levels,
               const std::vector<std::string>& sets, std::ostream& out)
{
    RunConfig cfg = resolve_config(config_path, sets);
    cfg.input_dir = noisy_dir;
    cfg.output_dir = report_path;
    const FrameSequence noisy = load_sequence(noisy_dir);
    const auto clean = load_frames(clean_dir);
    std::string kind = "unknown";
    double param = 0.0;
    NoiseManifest m;
    if (find_manifest(noisy_dir, m)) {
        kind = to_string(m.spec.kind);
        param = m.spec.parameter();
        cfg.noise = m.spec;
    }
    const AblationMode which = mode == "pe" ? AblationMode::pe : AblationMode::stages;
    const AblationResult result = run_ablation(which, noisy, clean, cfg, levels, kind, param);
    write_report(result.rows, report_path);
    if (which == AblationMode::pe) {
        std::ofstream txt(report_path + ".txt", std::ios::binary | std::ios::app);
        txt << '\n' << render_pe_table(result);
    }
    echo_config(cfg, report_path + ".config.txt");
    out << render_report_table(result.rows);
    if (which == AblationMode::pe)
        out << '\n' << render_pe_table(result);
    return 0;
}

} // namespace

AblationResult run_ablation(AblationMode mode, const FrameSequence& noisy, const std::vector<TensorF>& clean,
                            const RunConfig& cfg, const std::vector<int>& levels, const std::string& noise_kind,
                            double noise_param, const EpochCallback& on_epoch)
{
    if (clean.size() != noisy.frames.size())
        throw ShapeError("ablate: " + std::to_string(noisy.frames.size()) + " noisy frames but "
                         + std::to_string(clean.size()) + " clean frames");
    AblationResult result;
    const auto row = [&](const std::string& variant, const std::vector<TensorF>& frames, int L) {
        MetricsReport r = evaluate(frames, clean);
        r.variant = variant;
        r.noise_kind = noise_kind;
        r.noise_param = noise_param;
        result.rows.push_back(summary_row(r));
        result.levels.push_back(L);
    };
    if (mode == AblationMode::stages) {
        const Checkpoint s1 = train_stage1(noisy, cfg.train, on_epoch);
        const Checkpoint s2 = train_stage2(noisy, s1, on_epoch);
        row("F+D", denoise_sequence(s2, noisy, OutputStage::denoiser).frames, cfg.train.levels);
        row("F+D+R", denoise_sequence(s2, noisy, OutputStage::refined).frames, cfg.train.levels);
        return result;
    }
    if (levels.empty())
        throw ContractError("ablate: pe mode needs at least one L");
    for (int L : levels) {
        TrainConfig train = cfg.train;
        train.levels = L;
        const Checkpoint s1 = train_stage1(noisy, train, on_epoch);
        const Checkpoint s2 = train_stage2(noisy, s1, on_epoch);
        row("L=" + std::to_string(L), denoise_sequence(s2, noisy, OutputStage::refined).frames, L);
    }
    return result;
}

std::string render_pe_table(const AblationResult& result)
{
    std::string header = "metric";
    std::string psnr_line = "PSNR  ";
    std::string ssim_line = "SSIM  ";
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        char cell[32];
        const std::string name = "L=" + std::to_string(result.levels[i]);
        std::snprintf(cell, sizeof cell, "%10s", name.c_str());
        header += cell;
        std::snprintf(cell, sizeof cell, "%10.2f", result.rows[i].psnr_db);
        psnr_line += cell;
        std::snprintf(cell, sizeof cell, "%10.4f", result.rows[i].ssim);
        ssim_line += cell;
    }
    return header + "\n" + psnr_line + "\n" + ssim_line + "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Unsupervised coordinate-based video denoiser", args.empty() ? "cbvd" : args[0]};
    app.require_subcommand(1);

    std::string input, output, kind, noisy, config, train_stage, denoise_stage, ckpt, ckpt_in, denoised, clean, mode, log_path,
        variant = "model";
    double sigma = 30.0, lambda = 30.0, alpha = 0.2;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
    std::vector<int> levels{5, 10, 20, 30, 50, 100};

    auto* corrupt = app.add_subcommand("corrupt", "Freeze a noisy copy of a clean frame directory");
    corrupt->add_option("--input", input, "Clean frame directory (frame_%05d.png)")->required();
    corrupt->add_option("--noise", kind, "gaussian | poisson | impulse")
        ->required()
        ->check(CLI::IsMember({"gaussian", "poisson", "impulse"}));
    corrupt->add_option("--sigma", sigma, "Gaussian std in 8-bit units");
    corrupt->add_option("--lambda", lambda, "Poisson peak rate");
    corrupt->add_option("--alpha", alpha, "Impulse corrupted-pixel fraction");
    corrupt->add_option("--seed", seed, "Noise seed");
    corrupt->add_option("--out", output, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Fit the networks to one noisy sequence");
    train->add_option("--noisy", noisy, "Noisy frame directory")->required();
    train->add_option("--config", config, "key=value config file");
    train->add_option("--stage", train_stage, "1 | 2 | both")->default_val("both")->check(CLI::IsMember({"1", "2", "both"}));
    train->add_option("--out", output, "Checkpoint to write")->required();
    train->add_option("--ckpt", ckpt_in, "after_stage1 checkpoint (for --stage 2)");
    train->add_option("--set", sets, "Override a config key (key=value)");
    train->add_option("--log", log_path, "Also write the loss log to this file");

    auto* denoise = app.add_subcommand("denoise", "Write denoised frames from a checkpoint");
    denoise->add_option("--ckpt", ckpt, "Checkpoint")->required();
    denoise->add_option("--noisy", noisy, "Noisy frame directory")->required();
    denoise->add_option("--stage", denoise_stage, "denoiser | refined")
        ->default_val("refined")
        ->check(CLI::IsMember({"denoiser", "refined"}));
    denoise->add_option("--out", output, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "PSNR/SSIM of denoised frames against clean frames");
    eval->add_option("--denoised", denoised, "Denoised frame directory")->required();
    eval->add_option("--clean", clean, "Clean frame directory")->required();
    eval->add_option("--out", output, "Report CSV path")->required();
    eval->add_option("--variant", variant, "Variant label for the report row");

    auto* ablate = app.add_subcommand("ablate", "Positional-encoding or stage ablation");
    ablate->add_option("--mode", mode, "pe | stages")->required()->check(CLI::IsMember({"pe", "stages"}));
    ablate->add_option("--noisy", noisy, "Noisy frame directory")->required();
    ablate->add_option("--clean", clean, "Clean frame directory")->required();
    ablate->add_option("--config", config, "key=value config file");
    ablate->add_option("--out", output, "Report CSV path")->required();
    ablate->add_option("--levels", levels, "Frequency levels for pe mode")->delimiter(',');
    ablate->add_option("--set", sets, "Override a config key (key=value)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        if (!reversed.empty())
            reversed.pop_back();
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (corrupt->parsed())
            return cmd_corrupt(input, kind, sigma, lambda, alpha, seed, output, out);
        if (train->parsed())
            return cmd_train(noisy, config, train_stage, output, ckpt_in, sets, log_path, out);
        if (denoise->parsed())
            return cmd_denoise(ckpt, noisy, denoise_stage, output, out);
        if (eval->parsed())
            return cmd_eval(denoised, clean, output, variant, out);
        if (ablate->parsed())
            return cmd_ablate(mode, noisy, clean, config, output, levels, sets, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace cbvd
