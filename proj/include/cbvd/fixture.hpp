#pragma once

#include "cbvd/frames.hpp"

namespace cbvd {

/// Deterministic smooth test video: a drifting color gradient with two soft
/// blobs moving across it. Values stay within [0.1, 0.9].
FrameSequence make_moving_pattern(Index frames, Index height, Index width, Index channels);

} // namespace cbvd
