// Regenerates the committed desk fixture under tests/data.
#include "cbvd/fixture.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: make_fixture <out-dir>\n";
        return 2;
    }
    const auto seq = cbvd::make_moving_pattern(10, 48, 48, 3);
    cbvd::save_frames(seq.frames, argv[1]);
    return 0;
}
