#pragma once

#include "cbvd/tensor.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbvd {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ordered frames, each [C, H, W] in [0, 1], with optional clean ground truth.
struct FrameSequence {
    std::vector<TensorF> frames;
    std::vector<TensorF> clean; // empty, or one per frame

    Index size() const { return static_cast<Index>(frames.size()); }
    bool empty() const { return frames.empty(); }
    Index channels() const { return frames.at(0).dim(0); }
    Index height() const { return frames.at(0).dim(1); }
    Index width() const { return frames.at(0).dim(2); }
    bool has_clean() const { return !clean.empty(); }

    /// Throws ShapeError unless every frame shares one [C,H,W] shape and lies in [0,1].
    void validate() const;
};

/// Deep copy; the frames of the result share no storage with the input.
FrameSequence clone(const FrameSequence& seq);

std::string frame_filename(Index index);

/// 8-bit gray or RGB PNG as a [C, H, W] tensor scaled to [0, 1].
TensorF read_png(const std::filesystem::path& path);
/// Writes round(255 * clamp(v, 0, 1)); C must be 1 or 3.
void write_png(const TensorF& frame, const std::filesystem::path& path);

/// Loads frame_00000.png, frame_00001.png, ... from a directory. A gap is an
/// IoError naming the first missing index.
std::vector<TensorF> load_frames(const std::filesystem::path& dir);
void save_frames(const std::vector<TensorF>& frames, const std::filesystem::path& dir);

/// The value an 8-bit round trip produces.
float quantize8(float v);

} // namespace cbvd
