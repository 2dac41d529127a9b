#ifndef PROTOMARK_PNG_IO_HPP
#define PROTOMARK_PNG_IO_HPP

#include <string>

#include "protomark/image.hpp"

namespace protomark {

// Reads an 8- or 16-bit grayscale PNG; values rescaled to [0,1] by the bit
// depth. Color or palette inputs are converted to grayscale. bit_depth_out,
// when non-null, receives the source depth.
GrayImage read_png_gray(const std::string& path, int* bit_depth_out = nullptr);

// Writes img as a grayscale PNG at bit_depth 8 or 16, quantizing values by
// round(v * (2^depth - 1)). Output bytes are deterministic for equal input.
void write_png_gray(const std::string& path, const GrayImage& img, int bit_depth = 8);

} // namespace protomark

#endif
