#pragma once

#include <string>
#include <vector>

namespace uiseg::net {

// Spatial side lengths through a valid-convolution U-net with 3x3 kernels,
// 2x2 pooling and 2x2 up-convolutions.
struct IoShapes {
    bool feasible = false;
    int input_side = 0;
    int output_side = 0;
    std::string reason;               // why the geometry is infeasible
    std::vector<int> encoder_sides;   // after the two convolutions of each level
    std::vector<int> decoder_sides;   // after each up-convolution, deepest first
    int bottleneck_side = 0;
};

// Never rounds: any non-positive intermediate size, odd size before pooling or
// odd crop margin for a skip connection makes the geometry infeasible.
[[nodiscard]] IoShapes compute_io_shapes(int depth, int input_side);

}  // namespace uiseg::net
