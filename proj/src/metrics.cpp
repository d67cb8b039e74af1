#include "aif/metrics.hpp"

#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

#include "aif/errors.hpp"
#include "aif/losses.hpp"

namespace aif {

namespace F = torch::nn::functional;

double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimConfig& config) {
    if (!a.sizes().equals(b.sizes())) throw ShapeError("ssim needs images of equal shape");
    if (a.dim() != 3) throw ShapeError("ssim expects [C,H,W] images");
    if (a.size(1) < config.window || a.size(2) < config.window) throw ShapeError("image smaller than the SSIM window");
    const double c1 = std::pow(config.k1 * config.data_range, 2);
    const double c2 = std::pow(config.k2 * config.data_range, 2);
    const auto x = a.detach().to(torch::kDouble).unsqueeze(0);
    const auto y = b.detach().to(torch::kDouble).unsqueeze(0);
    auto pool = [&](const torch::Tensor& t) { return F::avg_pool2d(t, F::AvgPool2dFuncOptions(config.window).stride(1)); };
    const auto mx = pool(x), my = pool(y);
    const auto vx = pool(x * x) - mx * mx;
    const auto vy = pool(y * y) - my * my;
    const auto cxy = pool(x * y) - mx * my;
    const auto map = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    return map.mean({0, 2, 3}).mean().item<double>();
}

double shallow_style_difference(const torch::Tensor& a, const torch::Tensor& b, FeatureBackbone& backbone) {
    torch::NoGradGuard no_grad;
    const auto pa = extract_feature_pyramid(a.dim() == 3 ? a.unsqueeze(0) : a, backbone);
    const auto pb = extract_feature_pyramid(b.dim() == 3 ? b.unsqueeze(0) : b, backbone);
    const FeaturePyramid sa{{pa[0], pa[1]}}, sb{{pb[0], pb[1]}};
    return style_loss(sa, sb).item<double>();
}

double sentiment_gap(const torch::Tensor& out, const torch::Tensor& anchor, SentimentExtractor& extractor) {
    torch::NoGradGuard no_grad;
    return (sentiment_vector(out, extractor) - sentiment_vector(anchor, extractor))
        .to(torch::kDouble)
        .norm()
        .item<double>();
}

double ensemble_accuracy(const std::vector<EmotionDistribution>& predictions, const std::vector<Emotion>& labels) {
    if (predictions.empty()) throw InvalidArgument("accuracy of an empty set");
    if (predictions.size() != labels.size()) throw InvalidArgument("prediction and label counts differ");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i].argmax() == labels[i];
    return double(hits) / double(labels.size());
}

double ensemble_accuracy(const std::vector<torch::Tensor>& outputs, const std::vector<Emotion>& labels,
                         EmotionEnsemble& ensemble) {
    if (outputs.empty()) throw InvalidArgument("accuracy of an empty set");
    if (outputs.size() != labels.size()) throw InvalidArgument("output and label counts differ");
    std::vector<EmotionDistribution> predictions;
    for (const auto& img : outputs) predictions.push_back(ensemble.distribution(img));
    return ensemble_accuracy(predictions, labels);
}

double cohen_kappa(const std::vector<int>& r1, const std::vector<int>& r2) {
    if (r1.size() != r2.size()) throw InvalidArgument("rater sequences differ in length");
    if (r1.empty()) throw InvalidArgument("kappa of empty sequences");
    const double n = double(r1.size());
    std::map<int, double> m1, m2;
    double agree = 0;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        agree += r1[i] == r2[i];
        m1[r1[i]] += 1;
        m2[r2[i]] += 1;
    }
    double pe = 0;
    for (const auto& [k, c] : m1) {
        const auto it = m2.find(k);
        if (it != m2.end()) pe += (c / n) * (it->second / n);
    }
    if (pe >= 1.0) throw InvalidArgument("chance agreement is 1; kappa undefined");
    return (agree / n - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<std::vector<std::int64_t>>& ratings) {
    if (ratings.empty() || ratings.front().empty()) throw InvalidArgument("empty rating table");
    const auto k = ratings.front().size();
    std::int64_t raters = -1;
    std::vector<double> column(k, 0.0);
    double p_bar = 0;
    for (const auto& row : ratings) {
        if (row.size() != k) throw InvalidArgument("rows have different category counts");
        std::int64_t n = 0;
        double squares = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j] < 0) throw InvalidArgument("negative rating count");
            n += row[j];
            squares += double(row[j]) * double(row[j]);
            column[j] += double(row[j]);
        }
        if (raters < 0) raters = n;
        if (n != raters) throw InvalidArgument("every item needs the same number of raters");
        if (n < 2) throw InvalidArgument("at least two raters per item are required");
        p_bar += (squares - double(n)) / (double(n) * double(n - 1));
    }
    const double items = double(ratings.size());
    p_bar /= items;
    double pe = 0;
    for (double c : column) {
        const double pj = c / (items * double(raters));
        pe += pj * pj;
    }
    if (pe >= 1.0) throw InvalidArgument("chance agreement is 1; kappa undefined");
    return (p_bar - pe) / (1.0 - pe);
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["ssim"] = ssim;
    j["ssd"] = ssd;
    j["sg"] = sg;
    j["eacc"] = eacc;
    j["sg_content_anchor"] = sg_content;
    j["count"] = count;
    return j.dump(2);
}

}  // namespace aif
