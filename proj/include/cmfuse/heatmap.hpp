#pragma once

#include <string>

#include "cmfuse/tensor.hpp"

namespace cmfuse {

// 24-bit BMP heatmap of a matrix. Diverging maps zero to white, negative to
// blue and positive to yellow; sequential maps min..max to white..dark red.
// Cells are upscaled so the image is at least ~256 px wide.
void write_heatmap_bmp(const std::string& path, const Tensor& m, bool diverging);

}  // namespace cmfuse
