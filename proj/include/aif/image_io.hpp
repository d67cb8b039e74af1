#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace aif {

// Images are float tensors shaped [3, H, W] (RGB, values in [0, 1]);
// batches add a leading dimension.

/// Reads an 8-bit PNG/JPEG as RGB. Throws FormatError on failure.
torch::Tensor read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG, rounding to the nearest level after clamping.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Encoded PNG bytes for `image` (same conversion as write_png).
std::vector<unsigned char> encode_png(const torch::Tensor& image);

/// Area-resamples to size x size when the image is not already that size.
torch::Tensor resize_image(const torch::Tensor& image, std::int64_t size);

/// Quantizes to 8 bits and back, matching a PNG round trip.
torch::Tensor quantize_8bit(const torch::Tensor& image);

}  // namespace aif
