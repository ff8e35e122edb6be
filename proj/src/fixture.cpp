#include "cbvd/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cbvd {

FrameSequence make_moving_pattern(Index frames, Index height, Index width, Index channels)
{
    constexpr double pi = std::numbers::pi;
    FrameSequence seq;
    for (Index f = 0; f < frames; ++f) {
        const double t = frames > 1 ? double(f) / double(frames - 1) : 0.0;
        TensorF frame({channels, height, width});
        for (Index c = 0; c < channels; ++c) {
            const double phase = 2.0 * pi * double(c) / 3.0;
            for (Index y = 0; y < height; ++y) {
                for (Index x = 0; x < width; ++x) {
                    const double u = double(x) / double(width - 1);
                    const double v = double(y) / double(height - 1);
                    double value = 0.45 + 0.15 * std::sin(2.0 * pi * (0.8 * u + 0.5 * v) + phase + 1.5 * t);
                    const double bx = 0.25 + 0.45 * t, by = 0.35 + 0.2 * t;
                    value += 0.25 * std::exp(-((u - bx) * (u - bx) + (v - by) * (v - by)) / 0.015)
                        * (c == 0 ? 1.0 : 0.6);
                    const double cx = 0.75 - 0.35 * t, cy = 0.7;
                    value -= 0.2 * std::exp(-((u - cx) * (u - cx) + (v - cy) * (v - cy)) / 0.02)
                        * (c == 2 ? 1.0 : 0.5);
                    frame.data()[(c * height + y) * width + x] = static_cast<float>(std::clamp(value, 0.1, 0.9));
                }
            }
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

} // namespace cbvd
