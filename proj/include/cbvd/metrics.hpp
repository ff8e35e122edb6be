#pragma once

#include "cbvd/frames.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cbvd {

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// 10 log10(1 / MSE) over all channels, data range 1. Identical frames give kPsnrCap.
double psnr(const TensorF& a, const TensorF& b);

/**
 * Mean SSIM over all valid 11x11 windows (Gaussian weights, sigma 1.5) with
 * C1 = 0.01^2 and C2 = 0.03^2. Multi-channel frames average the per-channel
 * scores. Frames smaller than the window are a ContractError.
 */
double ssim(const TensorF& a, const TensorF& b);

struct MetricsReport {
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::string variant;
    std::string noise_kind = "unknown";
    double noise_param = 0.0;
    int levels = 0;
};

/// Per-frame metrics of `estimate` against `reference`; counts must match.
MetricsReport evaluate(const std::vector<TensorF>& estimate, const std::vector<TensorF>& reference);

struct ReportRow {
    std::string variant;
    std::string noise_kind;
    double noise_param = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

inline constexpr const char* kReportHeader = "variant,noise_kind,noise_param,psnr_db,ssim";

ReportRow summary_row(const MetricsReport& report);

std::string render_report_csv(const std::vector<ReportRow>& rows);
/// Column-aligned plain-text rendering of the same rows.
std::string render_report_table(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(const std::string& text);

/// Writes <path> as CSV and <path>.txt as the aligned table. Rows must be non-empty.
void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

/// Per-frame CSV: frame,psnr_db,ssim.
std::string render_per_frame_csv(const MetricsReport& report);

} // namespace cbvd
