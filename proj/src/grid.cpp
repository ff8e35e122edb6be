#include "cbvd/grid.hpp"

#include <string>

namespace cbvd {

double normalized_coordinate(Index i, Index n)
{
    if (n <= 1)
        return 0.0;
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

CoordGrid make_grid(Index height, Index width, Index frame, Index frames)
{
    if (height <= 0 || width <= 0)
        throw ShapeError("make_grid: extents must be positive");
    if (frame < 0 || frame >= frames)
        throw std::out_of_range("make_grid: frame index " + std::to_string(frame) + " outside [0, "
                                + std::to_string(frames) + ")");
    CoordGrid grid;
    grid.height = height;
    grid.width = width;
    grid.frame = frame;
    grid.frames = frames;
    grid.values = Tensor<double>({height, width, 3});
    double* v = grid.values.data();
    const double t = normalized_coordinate(frame, frames);
    for (Index y = 0; y < height; ++y) {
        const double yn = normalized_coordinate(y, height);
        for (Index x = 0; x < width; ++x) {
            double* p = v + (y * width + x) * 3;
            p[0] = normalized_coordinate(x, width);
            p[1] = yn;
            p[2] = t;
        }
    }
    return grid;
}

} // namespace cbvd
