#include "aif/grid.hpp"

#include <fstream>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include "aif/errors.hpp"
#include "aif/image_io.hpp"

namespace aif {

namespace {

cv::Mat to_rgb8(const torch::Tensor& image) {
    const auto hwc = (image.detach().to(torch::kFloat64).clamp(0, 1) * 255.0).round().to(torch::kUInt8)
                         .permute({1, 2, 0}).contiguous();
    return cv::Mat(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr()).clone();
}

// Drops trailing characters until the caption fits the strip.
std::string fit_caption(std::string text, int width, double scale) {
    int baseline = 0;
    while (!text.empty() && cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline).width > width - 4) {
        text.pop_back();
    }
    return text;
}

}  // namespace

torch::Tensor compose_grid(const std::vector<GridRow>& rows) {
    if (rows.empty()) throw InvalidArgument("grid needs at least one row");
    const auto& first = rows.front().content;
    if (!first.defined() || first.dim() != 3 || first.size(0) != 3) throw ShapeError("grid images must be [3,H,W]");
    const auto h = first.size(1), w = first.size(2);
    const auto per_row = rows.front().outputs.size() + 1;
    const int width = static_cast<int>(w * static_cast<std::int64_t>(per_row));
    const int row_height = static_cast<int>(h + kCaptionHeight);
    cv::Mat canvas(row_height * static_cast<int>(rows.size()), width, CV_8UC3, cv::Scalar(255, 255, 255));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.outputs.size() + 1 != per_row) throw ShapeError("grid rows hold different image counts");
        std::vector<torch::Tensor> images{row.content};
        images.insert(images.end(), row.outputs.begin(), row.outputs.end());
        const int top = static_cast<int>(r) * row_height;
        const auto caption = fit_caption(row.caption, width, 0.35);
        cv::putText(canvas, caption, cv::Point(2, top + static_cast<int>(kCaptionHeight) - 4), cv::FONT_HERSHEY_SIMPLEX,
                    0.35, cv::Scalar(0, 0, 0), 1, cv::LINE_8);
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto& img = images[i];
            if (!img.defined() || img.dim() != 3 || img.size(0) != 3 || img.size(1) != h || img.size(2) != w) {
                throw ShapeError("grid image " + std::to_string(i) + " of row " + std::to_string(r) +
                                 " differs in size from the first image");
            }
            to_rgb8(img).copyTo(canvas(cv::Rect(static_cast<int>(i * w), top + static_cast<int>(kCaptionHeight),
                                                static_cast<int>(w), static_cast<int>(h))));
        }
    }
    const auto t = torch::from_blob(canvas.data, {canvas.rows, canvas.cols, 3}, torch::kUInt8);
    return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void emit_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path) {
    write_png(path, compose_grid(rows));
}

std::vector<GridRow> load_grid_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open grid spec " + path.string());
    nlohmann::json spec;
    try {
        spec = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("grid spec " + path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    std::vector<GridRow> rows;
    try {
        for (const auto& r : spec.at("rows")) {
            GridRow row;
            row.content = read_image(resolve(r.at("content").get<std::string>()));
            row.caption = r.value("caption", std::string{});
            for (const auto& o : r.at("outputs")) row.outputs.push_back(read_image(resolve(o.get<std::string>())));
            rows.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("grid spec " + path.string() + ": " + e.what());
    }
    return rows;
}

}  // namespace aif
