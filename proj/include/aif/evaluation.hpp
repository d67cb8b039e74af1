#pragma once

#include <functional>
#include <vector>

#include "aif/aifb_training.hpp"
#include "aif/aifd.hpp"
#include "aif/classifiers.hpp"
#include "aif/dataset.hpp"
#include "aif/features.hpp"
#include "aif/metrics.hpp"

namespace aif {

/// Filters the content image of one sample.
using FilterFn = std::function<torch::Tensor(const AnchorSample& sample, const torch::Tensor& content)>;

/// Runs the filter over every sample and averages SSIM against the content,
/// SSD and SG against the anchor, and ensemble accuracy against the label.
EvalReport evaluate_filter(const std::vector<const AnchorSample*>& samples, const FilterFn& filter,
                           EmotionEnsemble& ensemble, SentimentExtractor& extractor);

/// AIF-D on every sample's first description. Each sample gets its own noise
/// seed derived from options.seed and its content hash, so the report does
/// not depend on sample order.
EvalReport evaluate_aifd(AifdModel& model, const std::vector<const AnchorSample*>& samples,
                         const SampleOptions& options, LanguageModelClient* client = nullptr);

/// AIF-B on every sample's first description.
EvalReport evaluate_aifb(AifbModel& model, const std::vector<const AnchorSample*>& samples);

}  // namespace aif
