#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace aif {

/// One grid row: the content image, its caption and the filtered outputs.
struct GridRow {
    torch::Tensor content;
    std::string caption;
    std::vector<torch::Tensor> outputs;
};

inline constexpr std::int64_t kCaptionHeight = 16;

/// Rows stacked vertically, each a caption strip above the content image
/// followed by its outputs. Every image must share one size and every row one
/// image count; empty input throws InvalidArgument, mismatches ShapeError.
torch::Tensor compose_grid(const std::vector<GridRow>& rows);

/// compose_grid written as an 8-bit RGB PNG.
void emit_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path);

/// Rows from a JSON spec: {"rows": [{"content": path, "caption": text,
/// "outputs": [path, ...]}]}. Relative paths resolve against the spec's directory.
std::vector<GridRow> load_grid_spec(const std::filesystem::path& path);

}  // namespace aif
