#pragma once

#include <string>

#include "agis/tensor.hpp"

namespace agis {

/// Images on disk are lossless binary PPM (P6, 3 channels) or PGM (P5, 1
/// channel), 8-bit. Pixel values map linearly: byte b <-> value b/255*2-1.
/// Images whose values already lie on the 8-bit grid round-trip bit-exactly.

Scalar byte_to_value(unsigned char b);
unsigned char value_to_byte(Scalar v);
/// Snap a [-1,1] value to the nearest representable 8-bit value.
Scalar quantize8(Scalar v);

/// img must be [C,H,W] with C in {1,3}.
void write_image(const std::string& path, const Tensor& img);
Tensor read_image(const std::string& path);

}  // namespace agis
