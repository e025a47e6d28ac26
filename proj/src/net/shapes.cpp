#include "uiseg/net/shapes.hpp"

#include "uiseg/error.hpp"

namespace uiseg::net {

IoShapes compute_io_shapes(int depth, int input_side) {
    if (depth < 1) throw InvalidArgument("network depth must be >= 1");
    IoShapes s;
    s.input_side = input_side;
    auto fail = [&](std::string why) {
        s.feasible = false;
        s.reason = std::move(why);
        return s;
    };
    int side = input_side;
    for (int level = 0; level < depth; ++level) {
        side -= 4;
        if (side <= 0) return fail("level " + std::to_string(level) + " convolutions leave no pixels");
        if (side % 2 != 0) return fail("odd size " + std::to_string(side) + " before pooling at level " + std::to_string(level));
        s.encoder_sides.push_back(side);
        side /= 2;
    }
    side -= 4;
    if (side <= 0) return fail("bottleneck convolutions leave no pixels");
    s.bottleneck_side = side;
    for (int level = depth - 1; level >= 0; --level) {
        side *= 2;
        s.decoder_sides.push_back(side);
        const int margin = s.encoder_sides[std::size_t(level)] - side;
        if (margin < 0 || margin % 2 != 0) {
            return fail("skip connection at level " + std::to_string(level) + " cannot be center-cropped");
        }
        side -= 4;
        if (side <= 0) return fail("decoder level " + std::to_string(level) + " convolutions leave no pixels");
    }
    s.output_side = side;
    s.feasible = true;
    return s;
}

}  // namespace uiseg::net
