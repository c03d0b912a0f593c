#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sttvc/tensor.hpp"

// Frames are 3 x H x W RGB in [0, 1].
namespace sttvc::io {

Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& frame);
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& frame);
// Dispatches on extension (.png, .ppm).
Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& frame);

// Interleaved RGB24 bytes <-> frame.
std::vector<std::uint8_t> to_rgb24(const Tensor& frame);
Tensor from_rgb24(const std::uint8_t* bytes, int width, int height);

// A sequence is either a directory of .png/.ppm frames (sorted by name) or a
// raw file of concatenated RGB24 frames, which needs width and height.
std::vector<Tensor> read_sequence(const std::string& path, int max_frames = -1, int width = 0, int height = 0);
// Writes frame_0000.png ... into dir, creating it.
void write_sequence(const std::string& dir, const std::vector<Tensor>& frames);

// Rounds to the nearest 8-bit level, the precision every decoded frame has.
Tensor quantize_8bit(const Tensor& frame);
// Replicates the last row/column up to multiples of `multiple`.
Tensor pad_replicate(const Tensor& frame, int multiple);
Tensor crop(const Tensor& frame, int height, int width);

}  // namespace sttvc::io
