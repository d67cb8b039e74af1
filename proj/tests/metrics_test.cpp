#include "test_doctest.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "aif/dataset.hpp"
#include "aif/errors.hpp"
#include "aif/evaluation.hpp"
#include "aif/grid.hpp"
#include "aif/image_io.hpp"
#include "aif/losses.hpp"
#include "aif/metrics.hpp"
#include "test_support.hpp"

using namespace aif;
using aif::testing::seeded;

TEST_CASE("ssim identity, symmetry and constants") {
    auto g = seeded(1);
    const auto a = torch::rand({3, 16, 16}, g);
    const auto b = torch::rand({3, 16, 16}, g);
    CHECK(ssim(a, a) == 1.0);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
    CHECK(ssim(a, b) < 1.0);

    // Constant images have zero variance, so only the luminance term remains.
    const double c1 = 0.01 * 0.01;
    for (const auto& [u, v] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.5}, std::pair{0.0, 1.0}}) {
        const double expected = (2 * u * v + c1) / (u * u + v * v + c1);
        CHECK(ssim(torch::full({3, 9, 9}, u, torch::kDouble), torch::full({3, 9, 9}, v, torch::kDouble)) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK_THROWS_AS(ssim(a, torch::rand({3, 16, 15})), ShapeError);
    CHECK_THROWS_AS(ssim(torch::rand({3, 5, 5}), torch::rand({3, 5, 5})), ShapeError);
}

TEST_CASE("shallow style difference and sentiment gap") {
    torch::manual_seed(2);
    FeatureBackbone backbone;
    SentimentExtractor extractor(backbone);
    auto g = seeded(2);
    const auto a = torch::rand({3, 32, 32}, g);
    const auto b = torch::rand({3, 32, 32}, g) * 0.5;
    const auto c = torch::rand({3, 32, 32}, g).pow(2);
    CHECK(shallow_style_difference(a, a, backbone) == 0.0);
    CHECK(sentiment_gap(a, a, extractor) == 0.0);
    CHECK(shallow_style_difference(a, a.flip(0), backbone) > 0.0);
    CHECK(sentiment_gap(a, b, extractor) >= 0.0);
    CHECK(sentiment_gap(a, c, extractor) <= sentiment_gap(a, b, extractor) + sentiment_gap(b, c, extractor) + 1e-9);

    // Feature statistics ignore where activations sit.
    const auto pyr = extract_feature_pyramid(a.unsqueeze(0), backbone);
    FeaturePyramid shuffled;
    for (const auto& level : pyr.levels) {
        const auto flat = level.flatten(2);
        const auto perm = torch::randperm(flat.size(2), g);
        shuffled.levels.push_back(flat.index_select(2, perm).reshape(level.sizes()));
    }
    CHECK(style_loss(pyr, shuffled).item<double>() < 1e-6);
}

TEST_CASE("ensemble accuracy") {
    std::vector<EmotionDistribution> constant;
    std::vector<Emotion> labels;
    for (int rep = 0; rep < 5; ++rep) {
        for (auto e : kAllEmotions) {
            constant.push_back(EmotionDistribution::delta(kAllEmotions[0]));
            labels.push_back(e);
        }
    }
    CHECK(ensemble_accuracy(constant, labels) == 0.125);
    std::vector<EmotionDistribution> perfect;
    for (auto e : labels) perfect.push_back(EmotionDistribution::delta(e));
    CHECK(ensemble_accuracy(perfect, labels) == 1.0);
    CHECK_THROWS_AS(ensemble_accuracy(std::vector<EmotionDistribution>{}, {}), InvalidArgument);
    CHECK_THROWS_AS(ensemble_accuracy(perfect, {Emotion::awe}), InvalidArgument);

    // Jointly permuting predictions and labels leaves the accuracy unchanged.
    std::vector<EmotionDistribution> mixed(perfect.begin(), perfect.begin() + 20);
    mixed.insert(mixed.end(), constant.begin() + 20, constant.end());
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(3));
    std::vector<EmotionDistribution> p2;
    std::vector<Emotion> l2;
    for (auto i : order) {
        p2.push_back(mixed[i]);
        l2.push_back(labels[i]);
    }
    CHECK(ensemble_accuracy(p2, l2) == ensemble_accuracy(mixed, labels));
}

TEST_CASE("cohen kappa") {
    CHECK(cohen_kappa({0, 1, 2, 1}, {0, 1, 2, 1}) == 1.0);
    CHECK(cohen_kappa({0, 1, 0, 1}, {1, 0, 1, 0}) == doctest::Approx(-1.0).epsilon(1e-12));
    // p_o = 0.7; rater marginals (0.5, 0.5) and (0.4, 0.6) give p_e = 0.5.
    const double k = cohen_kappa({0, 0, 1, 1, 0, 1, 0, 0, 1, 1}, {0, 1, 1, 1, 0, 0, 0, 1, 1, 1});
    CHECK(std::abs(k - 0.4) < 1e-12);
    CHECK_THROWS_AS(cohen_kappa({0, 1}, {0}), InvalidArgument);
    CHECK_THROWS_AS(cohen_kappa({}, {}), InvalidArgument);
    CHECK_THROWS_AS(cohen_kappa({2, 2}, {2, 2}), InvalidArgument);
}

TEST_CASE("cohen kappa of independent uniform raters is near zero") {
    std::mt19937_64 rng(4);
    std::vector<int> r1, r2;
    for (int i = 0; i < 10000; ++i) {
        r1.push_back(static_cast<int>(rng() % 8));
        r2.push_back(static_cast<int>(rng() % 8));
    }
    CHECK(std::abs(cohen_kappa(r1, r2)) < 0.05);
}

TEST_CASE("fleiss kappa") {
    CHECK(fleiss_kappa({{3, 0}, {0, 3}, {3, 0}}) == doctest::Approx(1.0).epsilon(1e-12));
    // P_bar = 1/3, P_e = 7/18.
    CHECK(std::abs(fleiss_kappa({{2, 0, 0}, {1, 1, 0}, {0, 1, 1}}) - (-1.0 / 11.0)) < 1e-12);
    CHECK_THROWS_AS(fleiss_kappa({{2, 0}, {1, 2}}), InvalidArgument);
    CHECK_THROWS_AS(fleiss_kappa({{2, 0}, {2, 0}}), InvalidArgument);
    CHECK_THROWS_AS(fleiss_kappa({{1, 0}, {0, 1}}), InvalidArgument);
    CHECK_THROWS_AS(fleiss_kappa({}), InvalidArgument);
}

TEST_CASE("eval report json") {
    EvalReport r;
    r.ssim = 0.5;
    r.eacc = 0.25;
    r.count = 4;
    const auto j = nlohmann::json::parse(r.to_json());
    for (const char* key : {"ssim", "ssd", "sg", "eacc", "sg_content_anchor", "count"}) CHECK(j.contains(key));
    CHECK(j["eacc"].get<double>() == 0.25);
}

TEST_CASE("evaluation of the identity filter and order invariance") {
    const auto keywords = KeywordLexicon::load(default_data_dir() / "emotion_keywords.tsv");
    SyntheticConfig config;
    config.per_category = 8;
    config.resolution = 32;
    std::mt19937_64 rng(5);
    const auto ds = generate_synthetic_dataset(config, rng, keywords);
    torch::manual_seed(5);
    FeatureBackbone backbone;
    EmotionEnsemble ensemble(backbone);
    SentimentExtractor extractor(backbone);
    std::vector<const AnchorSample*> samples;
    for (const auto& s : ds.samples) samples.push_back(&s);
    samples.resize(16);

    // Returning the anchor makes every output identical to its reference.
    const FilterFn to_anchor = [](const AnchorSample& s, const torch::Tensor&) { return s.image; };
    const auto r = evaluate_filter(samples, to_anchor, ensemble, extractor);
    CHECK(r.sg == 0.0);
    CHECK(r.ssd == 0.0);
    CHECK(r.count == 16);
    CHECK(r.sg_content > 0.0);

    const FilterFn identity = [](const AnchorSample&, const torch::Tensor& c) { return c; };
    const auto a = evaluate_filter(samples, identity, ensemble, extractor);
    CHECK(a.ssim == 1.0);
    CHECK(a.sg == doctest::Approx(a.sg_content).epsilon(1e-12));
    std::shuffle(samples.begin(), samples.end(), std::mt19937_64(6));
    const auto b = evaluate_filter(samples, identity, ensemble, extractor);
    CHECK(b.ssim == doctest::Approx(a.ssim).epsilon(1e-12));
    CHECK(b.ssd == doctest::Approx(a.ssd).epsilon(1e-12));
    CHECK(b.sg == doctest::Approx(a.sg).epsilon(1e-12));
    CHECK(b.eacc == a.eacc);

    CHECK_THROWS_AS(evaluate_filter({}, identity, ensemble, extractor), InvalidArgument);
    const FilterFn wrong = [](const AnchorSample&, const torch::Tensor&) { return torch::zeros({3, 8, 8}); };
    CHECK_THROWS_AS(evaluate_filter(samples, wrong, ensemble, extractor), ShapeError);
}

TEST_CASE("result grid layout") {
    auto g = seeded(7);
    std::vector<GridRow> rows;
    for (int r = 0; r < 2; ++r) {
        rows.push_back({torch::rand({3, 20, 24}, g), "row " + std::to_string(r),
                        {torch::rand({3, 20, 24}, g), torch::rand({3, 20, 24}, g)}});
    }
    const auto grid = compose_grid(rows);
    CHECK(grid.sizes() == torch::IntArrayRef{3, 2 * (20 + kCaptionHeight), 3 * 24});
    // Image pixels are copied through 8-bit quantization.
    const auto tile = grid.slice(1, kCaptionHeight, kCaptionHeight + 20).slice(2, 24, 48);
    CHECK(torch::allclose(tile, quantize_8bit(rows[0].outputs[0]), 0, 1e-6));
    CHECK(encode_png(grid) == encode_png(compose_grid(rows)));

    CHECK_THROWS_AS(compose_grid({}), InvalidArgument);
    auto bad = rows;
    bad[1].outputs[1] = torch::rand({3, 20, 20}, g);
    CHECK_THROWS_AS(compose_grid(bad), ShapeError);
    bad = rows;
    bad[1].outputs.pop_back();
    CHECK_THROWS_AS(compose_grid(bad), ShapeError);
}

TEST_CASE("grid spec files") {
    const auto dir = std::filesystem::temp_directory_path() / "aif_grid_spec_test";
    std::filesystem::create_directories(dir);
    auto g = seeded(8);
    write_png(dir / "c.png", torch::rand({3, 16, 16}, g));
    write_png(dir / "o.png", torch::rand({3, 16, 16}, g));
    {
        std::ofstream f(dir / "spec.json");
        f << R"({"rows": [{"content": "c.png", "caption": "calm", "outputs": ["o.png", "o.png"]}]})";
    }
    const auto rows = load_grid_spec(dir / "spec.json");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].caption == "calm");
    CHECK(rows[0].outputs.size() == 2);
    emit_grid(rows, dir / "grid.png");
    CHECK(read_image(dir / "grid.png").sizes() == torch::IntArrayRef{3, 16 + kCaptionHeight, 48});
    {
        std::ofstream f(dir / "broken.json");
        f << R"({"rows": [{"caption": "x"}]})";
    }
    CHECK_THROWS_AS(load_grid_spec(dir / "broken.json"), FormatError);
    std::filesystem::remove_all(dir);
}
