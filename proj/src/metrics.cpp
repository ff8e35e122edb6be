#include "cbvd/metrics.hpp"

#include "cbvd/keyvalue.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace cbvd {

namespace {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> gaussian_taps()
{
    std::vector<double> taps(kSsimWindow);
    const int half = kSsimWindow / 2;
    double total = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - half;
        taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += taps[i];
    }
    for (double& t : taps)
        t /= total;
    return taps;
}

// Separable 'valid' filtering: output is (H - 10) x (W - 10).
Plane filter_valid(const Plane& in, const std::vector<double>& taps)
{
    const Index k = static_cast<Index>(taps.size());
    const Index oh = in.rows() - k + 1, ow = in.cols() - k + 1;
    Plane horiz(in.rows(), ow);
    for (Index y = 0; y < in.rows(); ++y)
        for (Index x = 0; x < ow; ++x) {
            double s = 0.0;
            for (Index i = 0; i < k; ++i)
                s += taps[i] * in(y, x + i);
            horiz(y, x) = s;
        }
    Plane out(oh, ow);
    for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
            double s = 0.0;
            for (Index i = 0; i < k; ++i)
                s += taps[i] * horiz(y + i, x);
            out(y, x) = s;
        }
    return out;
}

void expect_same(const TensorF& a, const TensorF& b, const char* op)
{
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

} // namespace

double psnr(const TensorF& a, const TensorF& b)
{
    expect_same(a, b, "psnr");
    const double mse = (a.values().cast<double>() - b.values().cast<double>()).square().mean();
    if (mse == 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const TensorF& a, const TensorF& b)
{
    expect_same(a, b, "ssim");
    if (a.rank() != 3)
        throw ShapeError("ssim: expected [C,H,W], got " + to_string(a.shape()));
    const Index channels = a.dim(0), height = a.dim(1), width = a.dim(2);
    if (std::min(height, width) < kSsimWindow)
        throw ContractError("ssim: frame " + std::to_string(height) + "x" + std::to_string(width)
                            + " is smaller than the " + std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow)
                            + " window");
    const auto taps = gaussian_taps();
    double total = 0.0;
    for (Index c = 0; c < channels; ++c) {
        const Plane x = Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                            a.data() + c * height * width, height, width)
                            .cast<double>();
        const Plane y = Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                            b.data() + c * height * width, height, width)
                            .cast<double>();
        const Plane mx = filter_valid(x, taps), my = filter_valid(y, taps);
        const Plane sxx = filter_valid(x * x, taps) - mx * mx;
        const Plane syy = filter_valid(y * y, taps) - my * my;
        const Plane sxy = filter_valid(x * y, taps) - mx * my;
        const Plane map = ((2.0 * mx * my + kSsimC1) * (2.0 * sxy + kSsimC2))
            / ((mx * mx + my * my + kSsimC1) * (sxx + syy + kSsimC2));
        total += map.mean();
    }
    return total / static_cast<double>(channels);
}

MetricsReport evaluate(const std::vector<TensorF>& estimate, const std::vector<TensorF>& reference)
{
    if (estimate.size() != reference.size())
        throw ShapeError("evaluate: " + std::to_string(estimate.size()) + " frames against "
                         + std::to_string(reference.size()) + " reference frames");
    if (estimate.empty())
        throw ShapeError("evaluate: no frames");
    MetricsReport r;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        r.psnr.push_back(psnr(estimate[i], reference[i]));
        r.ssim.push_back(ssim(estimate[i], reference[i]));
    }
    double sp = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < r.psnr.size(); ++i) {
        sp += r.psnr[i];
        ss += r.ssim[i];
    }
    r.mean_psnr = sp / static_cast<double>(r.psnr.size());
    r.mean_ssim = ss / static_cast<double>(r.ssim.size());
    return r;
}

ReportRow summary_row(const MetricsReport& report)
{
    return {report.variant, report.noise_kind, report.noise_param, report.mean_psnr, report.mean_ssim};
}

namespace {

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

std::string render_report_csv(const std::vector<ReportRow>& rows)
{
    std::string out = std::string(kReportHeader) + "\n";
    for (const auto& r : rows)
        out += r.variant + "," + r.noise_kind + "," + format_double(r.noise_param) + "," + fixed(r.psnr_db, 4) + ","
            + fixed(r.ssim, 4) + "\n";
    return out;
}

std::string render_report_table(const std::vector<ReportRow>& rows)
{
    std::vector<std::vector<std::string>> cells{{"variant", "noise", "param", "PSNR (dB)", "SSIM"}};
    for (const auto& r : rows)
        cells.push_back({r.variant, r.noise_kind, format_double(r.noise_param), fixed(r.psnr_db, 2), fixed(r.ssim, 4)});
    std::vector<std::size_t> widths(cells[0].size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            const std::string& s = cells[r][c];
            const std::string pad(widths[c] - s.size(), ' ');
            line += c == 0 ? s + pad : "  " + pad + s;
        }
        out += line + "\n";
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : widths)
                total += w + 2;
            out += std::string(total - 2, '-') + "\n";
        }
    }
    return out;
}

std::vector<ReportRow> parse_report_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader)
        throw std::invalid_argument("report: header must be '" + std::string(kReportHeader) + "'");
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            f.push_back(cell);
        if (f.size() != 5)
            throw std::invalid_argument("report: malformed row '" + line + "'");
        rows.push_back({f[0], f[1], parse_double(f[2], "noise_param"), parse_double(f[3], "psnr_db"),
                        parse_double(f[4], "ssim")});
    }
    return rows;
}

void write_report(const std::vector<ReportRow>& rows, const fs::path& path)
{
    if (rows.empty())
        throw ContractError("write_report: no rows");
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream csv(path, std::ios::binary);
    csv << render_report_csv(rows);
    std::ofstream txt(path.string() + ".txt", std::ios::binary);
    txt << render_report_table(rows);
    if (!csv || !txt)
        throw IoError("cannot write report " + path.string());
}

std::string render_per_frame_csv(const MetricsReport& report)
{
    std::string out = "frame,psnr_db,ssim\n";
    for (std::size_t i = 0; i < report.psnr.size(); ++i)
        out += std::to_string(i) + "," + fixed(report.psnr[i], 4) + "," + fixed(report.ssim[i], 6) + "\n";
    return out;
}

} // namespace cbvd
