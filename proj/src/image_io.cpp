#include "aif/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "aif/errors.hpp"

namespace aif {

namespace {

cv::Mat to_bgr8(const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("expected a [3,H,W] image tensor");
    auto hwc = (image.detach().to(torch::kCPU, torch::kDouble).clamp(0.0, 1.0) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
    cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

torch::Tensor from_bgr8(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat).div(255.0).contiguous();
}

}  // namespace

torch::Tensor read_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw FormatError("cannot read image " + path.string());
    return from_bgr8(bgr);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
    const auto bytes = encode_png(image);
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw FormatError("cannot write " + path.string());
    const auto n = std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (n != bytes.size()) throw FormatError("short write to " + path.string());
}

std::vector<unsigned char> encode_png(const torch::Tensor& image) {
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", to_bgr8(image), buf)) throw FormatError("PNG encoding failed");
    return buf;
}

torch::Tensor resize_image(const torch::Tensor& image, std::int64_t size) {
    if (image.size(1) == size && image.size(2) == size) return image;
    auto hwc = image.detach().to(torch::kCPU, torch::kFloat).permute({1, 2, 0}).contiguous();
    cv::Mat src(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_32FC3, hwc.data_ptr());
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, cv::INTER_AREA);
    return torch::from_blob(dst.data, {size, size, 3}, torch::kFloat).clone().permute({2, 0, 1}).contiguous();
}

torch::Tensor quantize_8bit(const torch::Tensor& image) {
    // Same arithmetic as a write_png / read_image round trip, bit for bit.
    return (image.detach().to(torch::kDouble).clamp(0.0, 1.0) * 255.0)
        .round()
        .to(torch::kUInt8)
        .to(torch::kFloat)
        .div(255.0);
}

}  // namespace aif
