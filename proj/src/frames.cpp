#include "cbvd/frames.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <regex>

namespace fs = std::filesystem;

namespace cbvd {

void FrameSequence::validate() const
{
    if (frames.empty())
        throw ShapeError("frame sequence is empty");
    const Shape& ref = frames[0].shape();
    if (ref.size() != 3)
        throw ShapeError("frames must be [C,H,W], got " + to_string(ref));
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].shape() != ref)
            throw ShapeError("frame " + std::to_string(i) + " has shape " + to_string(frames[i].shape())
                             + ", expected " + to_string(ref));
        if ((frames[i].values() < 0.0f).any() || (frames[i].values() > 1.0f).any() || !frames[i].values().allFinite())
            throw ShapeError("frame " + std::to_string(i) + " has values outside [0,1]");
    }
    if (!clean.empty()) {
        if (clean.size() != frames.size())
            throw ShapeError("clean sequence has " + std::to_string(clean.size()) + " frames, noisy has "
                             + std::to_string(frames.size()));
        for (const auto& c : clean)
            if (c.shape() != ref)
                throw ShapeError("clean frame shape " + to_string(c.shape()) + " differs from " + to_string(ref));
    }
}

FrameSequence clone(const FrameSequence& seq)
{
    FrameSequence out;
    for (const auto& f : seq.frames)
        out.frames.push_back(f.clone());
    for (const auto& f : seq.clean)
        out.clean.push_back(f.clone());
    return out;
}

std::string frame_filename(Index index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05lld.png", static_cast<long long>(index));
    return buf;
}

float quantize8(float v)
{
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
}

TensorF read_png(const fs::path& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + image.message);
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const Index channels = color ? 3 : 1;
    const Index height = image.height, width = image.width;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    TensorF frame({channels, height, width});
    float* dst = frame.data();
    for (Index c = 0; c < channels; ++c)
        for (Index p = 0; p < height * width; ++p)
            dst[c * height * width + p] = static_cast<float>(buffer[p * channels + c]) / 255.0f;
    return frame;
}

void write_png(const TensorF& frame, const fs::path& path)
{
    if (frame.rank() != 3 || (frame.dim(0) != 1 && frame.dim(0) != 3))
        throw ShapeError("write_png: expected [1|3, H, W], got " + to_string(frame.shape()));
    const Index channels = frame.dim(0), height = frame.dim(1), width = frame.dim(2);
    std::vector<std::uint8_t> buffer(static_cast<std::size_t>(channels * height * width));
    const float* src = frame.data();
    for (Index c = 0; c < channels; ++c)
        for (Index p = 0; p < height * width; ++p)
            buffer[p * channels + c]
                = static_cast<std::uint8_t>(std::lround(std::clamp(src[c * height * width + p], 0.0f, 1.0f) * 255.0f));
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

std::vector<TensorF> load_frames(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw IoError("frame directory " + dir.string() + " does not exist");
    static const std::regex pattern(R"(frame_(\d{5})\.png)");
    std::map<long, fs::path> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(name, m, pattern))
            found.emplace(std::stol(m[1].str()), entry.path());
    }
    long expected = 0;
    for (const auto& [index, path] : found) {
        if (index != expected)
            break;
        ++expected;
    }
    if (found.empty() || expected != static_cast<long>(found.size()))
        throw IoError("frame directory " + dir.string() + " is missing " + frame_filename(expected) + " (index "
                      + std::to_string(expected) + ")");
    std::vector<TensorF> frames;
    for (const auto& [index, path] : found)
        frames.push_back(read_png(path));
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (frames[i].shape() != frames[0].shape())
            throw IoError(found[static_cast<long>(i)].string() + " has shape " + to_string(frames[i].shape())
                          + ", expected " + to_string(frames[0].shape()));
    return frames;
}

void save_frames(const std::vector<TensorF>& frames, const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < frames.size(); ++i)
        write_png(frames[i], dir / frame_filename(static_cast<Index>(i)));
}

} // namespace cbvd
