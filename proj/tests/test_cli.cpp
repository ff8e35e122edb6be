#include "support.hpp"

#include "cbvd/checkpoint.hpp"
#include "cbvd/cli.hpp"
#include "cbvd/fixture.hpp"
#include "cbvd/noise.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace cbvd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args)
{
    args.insert(args.begin(), "cbvd");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string file_text(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

const std::vector<std::string> kTiny{"--set", "K=1",          "--set", "L=2",          "--set", "feature_width=4",
                                     "--set", "denoise_width=4", "--set", "denoise_bottleneck=3", "--set", "refine_width=6",
                                     "--set", "epochs_stage1=3", "--set", "epochs_stage2=2", "--set", "lr1=1e-3",
                                     "--set", "lr2=1e-3"};

std::vector<std::string> with_tiny(std::vector<std::string> args)
{
    args.insert(args.end(), kTiny.begin(), kTiny.end());
    return args;
}

// Clean clip and its frozen gaussian corruption, shared by every case.
struct Workspace {
    fs::path root = testing::scratch_dir("cli");
    fs::path clean = root / "clean";
    fs::path noisy = root / "noisy";

    Workspace()
    {
        save_frames(make_moving_pattern(4, 12, 12, 3).frames, clean);
        const Outcome o = run({"corrupt", "--input", clean.string(), "--noise", "gaussian", "--sigma", "25", "--seed",
                               "3", "--out", noisy.string()});
        REQUIRE(o.code == 0);
    }
};

const Workspace& workspace()
{
    static const Workspace ws;
    return ws;
}

} // namespace

TEST_CASE("help and usage errors")
{
    CHECK(run({"--help"}).code == 0);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"corrupt", "--input", "x"}).code == 2);
}

TEST_CASE("corrupt")
{
    const Workspace& ws = workspace();
    const fs::path again = ws.root / "noisy_again";
    REQUIRE(run({"corrupt", "--input", ws.clean.string(), "--noise", "gaussian", "--sigma", "25", "--seed", "3", "--out",
                 again.string()})
                .code
            == 0);
    for (int f = 0; f < 4; ++f)
        CHECK(file_text(ws.noisy / frame_filename(f)) == file_text(again / frame_filename(f)));
    CHECK(fs::exists(ws.noisy / kResolvedConfigName));

    const fs::path imp = ws.root / "impulse";
    const Outcome o = run({"corrupt", "--input", ws.clean.string(), "--noise", "impulse", "--alpha", "0.2", "--out",
                           imp.string()});
    CHECK(o.code == 0);
    CHECK(o.out.find("4 impulse frames") != std::string::npos);
    CHECK(load_frames(imp).size() == 4);
    CHECK(read_manifest(imp).spec.kind == NoiseKind::impulse);

    CHECK(run({"corrupt", "--input", ws.clean.string(), "--noise", "speckle", "--out", (ws.root / "x").string()}).code
          == 2);
    CHECK(run({"corrupt", "--input", ws.clean.string(), "--noise", "impulse", "--alpha", "2", "--out",
               (ws.root / "x").string()})
              .code
          == 1);
    const Outcome missing = run({"corrupt", "--input", (ws.root / "nope").string(), "--noise", "gaussian", "--out",
                                 (ws.root / "x").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error:") == 0);
}

TEST_CASE("train")
{
    const Workspace& ws = workspace();
    const std::string both = (ws.root / "both.ckpt").string();
    const std::string log = (ws.root / "both.log").string();

    const Outcome o = run(with_tiny({"train", "--noisy", ws.noisy.string(), "--out", both, "--log", log}));
    REQUIRE(o.code == 0);
    CHECK(line_count(o.out) == 5);
    CHECK(file_text(log) == o.out);

    const Checkpoint ckpt = load_checkpoint(both);
    CHECK(ckpt.stage == Stage::after_stage2);
    CHECK(ckpt.config.radius == 1);
    CHECK(ckpt.config.frames == 4);
    CHECK(ckpt.config.height == 12);

    SUBCASE("stage 2 needs a checkpoint")
    {
        const Outcome u = run(with_tiny({"train", "--noisy", ws.noisy.string(), "--stage", "2", "--out", both}));
        CHECK(u.code == 2);
        CHECK(u.err.find("--ckpt") != std::string::npos);
    }

    SUBCASE("split stages reproduce the joint run")
    {
        const std::string s1 = (ws.root / "s1.ckpt").string(), s2 = (ws.root / "s2.ckpt").string();
        REQUIRE(run(with_tiny({"train", "--noisy", ws.noisy.string(), "--stage", "1", "--out", s1})).code == 0);
        CHECK(load_checkpoint(s1).stage == Stage::after_stage1);
        REQUIRE(run({"train", "--noisy", ws.noisy.string(), "--stage", "2", "--ckpt", s1, "--out", s2}).code == 0);
        CHECK(fnv1a64(file_text(s2)) == fnv1a64(file_text(both)));
    }

    SUBCASE("config echo loads back")
    {
        const RunConfig echoed = RunConfig::load(both + ".config.txt");
        CHECK(echoed.train.levels == 2);
        CHECK(echoed.train.feature_width == 4);
        CHECK(echoed.train.epochs_stage1 == 3);
        CHECK(echoed.checkpoint == both);
    }

    SUBCASE("unknown keys are rejected")
    {
        const Outcome u = run(with_tiny({"train", "--noisy", ws.noisy.string(), "--out", both, "--set", "gamma=1"}));
        CHECK(u.code == 1);
        CHECK(u.err.find("gamma") != std::string::npos);
        CHECK(run({"train", "--noisy", ws.noisy.string(), "--out", both, "--set", "novalue"}).code == 2);
    }
}

TEST_CASE("config file and preset precedence")
{
    const Workspace& ws = workspace();
    const fs::path cfg = ws.root / "run.cfg";
    {
        std::ofstream f(cfg);
        f << "# test config\npreset=main_text\nlambda1=0.5\nepochs_stage1=0\nepochs_stage2=0\nfeature_width=4\n"
             "denoise_width=4\ndenoise_bottleneck=3\nrefine_width=6\nL=2\nK=1\n";
    }
    const std::string out = (ws.root / "preset.ckpt").string();
    REQUIRE(run({"train", "--noisy", ws.noisy.string(), "--config", cfg.string(), "--out", out}).code == 0);
    TrainConfig t = load_checkpoint(out).config;
    CHECK(t.lambda1 == 0.5);
    CHECK(t.lambda2 == 1.0);
    CHECK(t.lr_decay_every == 100);

    REQUIRE(run({"train", "--noisy", ws.noisy.string(), "--config", cfg.string(), "--out", out, "--set",
                 "preset=appendix", "--set", "lambda2=0.25"})
                .code
            == 0);
    t = load_checkpoint(out).config;
    CHECK(t.lambda1 == 1.0);
    CHECK(t.lambda2 == 0.25);
    CHECK(t.lr_decay_every == 1000);
}

TEST_CASE("denoise and eval")
{
    const Workspace& ws = workspace();
    const std::string ckpt = (ws.root / "eval.ckpt").string();
    REQUIRE(run(with_tiny({"train", "--noisy", ws.noisy.string(), "--out", ckpt})).code == 0);

    const fs::path den = ws.root / "den", ref = ws.root / "ref";
    REQUIRE(run({"denoise", "--ckpt", ckpt, "--noisy", ws.noisy.string(), "--stage", "denoiser", "--out", den.string()})
                .code
            == 0);
    REQUIRE(run({"denoise", "--ckpt", ckpt, "--noisy", ws.noisy.string(), "--out", ref.string()}).code == 0);
    const auto d = load_frames(den), r = load_frames(ref);
    REQUIRE(d.size() == 4);
    REQUIRE(r.size() == 4);
    bool differ = false;
    for (std::size_t f = 0; f < 4; ++f) {
        CHECK(d[f].shape() == Shape{3, 12, 12});
        for (Index i = 0; i < d[f].size(); ++i)
            CHECK(d[f].data()[i] == quantize8(d[f].data()[i]));
        differ = differ || (d[f].values() != r[f].values()).any();
    }
    CHECK(differ);
    CHECK(fs::exists(den / "source_manifest.txt"));
    CHECK(run({"denoise", "--ckpt", ckpt, "--noisy", ws.noisy.string(), "--stage", "both", "--out", den.string()}).code
          == 2);

    SUBCASE("report")
    {
        const std::string report = (ws.root / "den.csv").string();
        const Outcome o = run({"eval", "--denoised", den.string(), "--clean", ws.clean.string(), "--out", report,
                               "--variant", "F+D"});
        REQUIRE(o.code == 0);
        const auto rows = parse_report_csv(file_text(report));
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].variant == "F+D");
        CHECK(rows[0].noise_kind == "gaussian");
        CHECK(rows[0].noise_param == 25.0);
        CHECK(rows[0].psnr_db == doctest::Approx(evaluate(d, load_frames(ws.clean)).mean_psnr).epsilon(1e-4));
        CHECK(line_count(file_text(report + ".frames.csv")) == 5);
        CHECK(o.out.find("F+D") != std::string::npos);
    }

    SUBCASE("clean against itself")
    {
        const std::string report = (ws.root / "self.csv").string();
        REQUIRE(run({"eval", "--denoised", ws.clean.string(), "--clean", ws.clean.string(), "--out", report}).code == 0);
        const auto rows = parse_report_csv(file_text(report));
        CHECK(rows[0].psnr_db == kPsnrCap);
        CHECK(rows[0].ssim == doctest::Approx(1.0));
    }

    SUBCASE("frame count mismatch")
    {
        const fs::path short_dir = ws.root / "short";
        save_frames({d[0], d[1]}, short_dir);
        const Outcome o = run({"eval", "--denoised", short_dir.string(), "--clean", ws.clean.string(), "--out",
                               (ws.root / "bad.csv").string()});
        CHECK(o.code == 1);
        CHECK(o.err.find("2 denoised frames") != std::string::npos);
    }
}

TEST_CASE("ablate")
{
    const Workspace& ws = workspace();

    SUBCASE("stages")
    {
        const std::string report = (ws.root / "stages.csv").string();
        const Outcome o = run(with_tiny({"ablate", "--mode", "stages", "--noisy", ws.noisy.string(), "--clean",
                                         ws.clean.string(), "--out", report}));
        REQUIRE(o.code == 0);
        const auto rows = parse_report_csv(file_text(report));
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].variant == "F+D");
        CHECK(rows[1].variant == "F+D+R");
        CHECK(rows[0].noise_kind == "gaussian");
        CHECK(file_text(report).substr(0, file_text(report).find('\n')) == kReportHeader);
    }

    SUBCASE("positional encoding")
    {
        const std::string report = (ws.root / "pe.csv").string();
        const Outcome o = run(with_tiny({"ablate", "--mode", "pe", "--levels", "1,3", "--noisy", ws.noisy.string(),
                                         "--clean", ws.clean.string(), "--out", report}));
        REQUIRE(o.code == 0);
        const auto rows = parse_report_csv(file_text(report));
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].variant == "L=1");
        CHECK(rows[1].variant == "L=3");
        const std::string table = file_text(report + ".txt");
        CHECK(table.find("L=1") != std::string::npos);
        CHECK(table.find("PSNR") != std::string::npos);
        CHECK(o.out.find("SSIM") != std::string::npos);

        // A second run writes the same report.
        const std::string again = (ws.root / "pe_again.csv").string();
        REQUIRE(run(with_tiny({"ablate", "--mode", "pe", "--levels", "1,3", "--noisy", ws.noisy.string(), "--clean",
                               ws.clean.string(), "--out", again}))
                    .code
                == 0);
        CHECK(file_text(again) == file_text(report));
    }

    CHECK(run({"ablate", "--mode", "width", "--noisy", "a", "--clean", "b", "--out", "c"}).code == 2);
}
