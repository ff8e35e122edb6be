#pragma once

#include "cbvd/config.hpp"
#include "cbvd/metrics.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cbvd {

/// Runs one `cbvd` invocation. args[0] is the program name. Returns the exit
/// code: 0 on success, 1 on a runtime failure, 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

enum class AblationMode { pe, stages };

struct AblationResult {
    std::vector<ReportRow> rows;
    std::vector<int> levels; // per row
};

/**
 * pe: one two-stage fit per L, each reported on the refined output.
 * stages: one two-stage fit, reported as F+D (denoiser) and F+D+R (refined).
 */
AblationResult run_ablation(AblationMode mode, const FrameSequence& noisy, const std::vector<TensorF>& clean,
                            const RunConfig& cfg, const std::vector<int>& levels, const std::string& noise_kind,
                            double noise_param, const EpochCallback& on_epoch = {});

/// One PSNR row and one SSIM row, one column per L.
std::string render_pe_table(const AblationResult& result);

} // namespace cbvd
