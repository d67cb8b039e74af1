#include "aif/evaluation.hpp"

#include "aif/errors.hpp"

namespace aif {

EvalReport evaluate_filter(const std::vector<const AnchorSample*>& samples, const FilterFn& filter,
                           EmotionEnsemble& ensemble, SentimentExtractor& extractor) {
    if (samples.empty()) throw InvalidArgument("evaluation needs at least one sample");
    torch::NoGradGuard no_grad;
    EvalReport report;
    std::vector<torch::Tensor> outputs;
    std::vector<Emotion> labels;
    auto& backbone = extractor->backbone();
    for (const auto* s : samples) {
        auto out = filter(*s, s->content);
        if (out.dim() == 4) out = out.squeeze(0);
        if (out.sizes() != s->content.sizes()) throw ShapeError("filter output shape differs from its content image");
        report.ssim += ssim(out, s->content);
        report.ssd += shallow_style_difference(out, s->image, backbone);
        report.sg += sentiment_gap(out, s->image, extractor);
        report.sg_content += sentiment_gap(s->content, s->image, extractor);
        outputs.push_back(out);
        labels.push_back(s->label);
    }
    const auto n = static_cast<double>(samples.size());
    report.ssim /= n;
    report.ssd /= n;
    report.sg /= n;
    report.sg_content /= n;
    report.eacc = ensemble_accuracy(outputs, labels, ensemble);
    report.count = static_cast<std::int64_t>(samples.size());
    return report;
}

EvalReport evaluate_aifd(AifdModel& model, const std::vector<const AnchorSample*>& samples,
                         const SampleOptions& options, LanguageModelClient* client) {
    auto filter = [&](const AnchorSample& s, const torch::Tensor& content) {
        auto o = options;
        o.seed = derive_seed(options.seed, 9, image_hash(content));
        return model.apply(content, {model.prompt(s.descriptions.front(), client)}, o);
    };
    return evaluate_filter(samples, filter, *model.ensemble, model.extractor);
}

EvalReport evaluate_aifb(AifbModel& model, const std::vector<const AnchorSample*>& samples) {
    auto filter = [&](const AnchorSample& s, const torch::Tensor& content) {
        return model.apply(content, {s.descriptions.front()});
    };
    return evaluate_filter(samples, filter, *model.ensemble, model.extractor);
}

}  // namespace aif
