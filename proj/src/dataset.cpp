#include "aif/dataset.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>
#include <set>

#include "aif/errors.hpp"
#include "aif/image_io.hpp"

namespace aif {

namespace {

namespace F = torch::nn::functional;
using Rgb = std::array<float, 3>;

// Dark, middle and light stops of every category ramp. Each channel is
// non-decreasing so anchors keep the luminance ordering of their scene.
constexpr std::array<std::array<Rgb, 3>, kNumEmotions> kPalettes{{
    {{{0.30f, 0.15f, 0.02f}, {0.95f, 0.65f, 0.15f}, {1.00f, 0.97f, 0.70f}}},  // amusement
    {{{0.02f, 0.06f, 0.30f}, {0.20f, 0.45f, 0.85f}, {0.75f, 0.92f, 1.00f}}},  // awe
    {{{0.05f, 0.22f, 0.08f}, {0.40f, 0.70f, 0.35f}, {0.85f, 0.97f, 0.80f}}},  // contentment
    {{{0.30f, 0.00f, 0.15f}, {0.95f, 0.20f, 0.55f}, {1.00f, 0.75f, 0.90f}}},  // excitement
    {{{0.25f, 0.00f, 0.00f}, {0.80f, 0.10f, 0.05f}, {1.00f, 0.55f, 0.35f}}},  // anger
    {{{0.15f, 0.15f, 0.00f}, {0.50f, 0.48f, 0.12f}, {0.85f, 0.82f, 0.50f}}},  // disgust
    {{{0.00f, 0.02f, 0.04f}, {0.12f, 0.20f, 0.28f}, {0.55f, 0.65f, 0.72f}}},  // fear
    {{{0.12f, 0.10f, 0.22f}, {0.40f, 0.36f, 0.55f}, {0.78f, 0.76f, 0.88f}}},  // sadness
}};

constexpr double kTextureAmplitude = 0.06;

const std::array<std::string_view, 6> kTemplates{
    "a {0} scene of soft shapes",     "this picture feels {0} and {1}", "i feel {0} looking at these colors",
    "{0} light over a quiet place",   "the shapes here look {0}",       "an image that seems {0} to me",
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

struct Grid {
    torch::Tensor y, x;  // pixel centres in [0,1]
};

Grid make_grid(std::int64_t size) {
    auto r = (torch::arange(size, torch::kFloat) + 0.5) / double(size);
    auto yx = torch::meshgrid({r, r}, "ij");
    return {yx[0], yx[1]};
}

torch::Tensor scene_luminance(std::int64_t size, const Grid& g, std::mt19937_64& rng) {
    const double base = uniform(rng, 0.3, 0.7);
    const double slope = uniform(rng, -0.3, 0.3);
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    auto lum = base + slope * (std::cos(theta) * (g.x - 0.5) + std::sin(theta) * (g.y - 0.5));
    const int shapes = 3 + static_cast<int>(pick(rng, 4));
    const double sharpness = 1.5 * double(size);  // about 1.5 px soft edge
    for (int s = 0; s < shapes; ++s) {
        const double cy = uniform(rng, 0.1, 0.9), cx = uniform(rng, 0.1, 0.9);
        const double value = uniform(rng, 0.0, 1.0);
        torch::Tensor inside;
        if (rng() & 1) {
            const double r = uniform(rng, 0.08, 0.25);
            inside = r - ((g.y - cy).pow(2) + (g.x - cx).pow(2)).sqrt();
        } else {
            const double hy = uniform(rng, 0.06, 0.22), hx = uniform(rng, 0.06, 0.22);
            inside = torch::minimum(hy - (g.y - cy).abs(), hx - (g.x - cx).abs());
        }
        const auto mask = torch::sigmoid(inside * sharpness);
        lum = lum * (1 - mask) + value * mask;
    }
    return lum.clamp(0.0, 1.0);
}

torch::Tensor texture(Emotion e, std::int64_t size, const Grid& g, std::mt19937_64& rng, torch::Generator& gen) {
    const double a = kTextureAmplitude;
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double two_pi = 2.0 * std::numbers::pi;
    const auto r = ((g.y - 0.5).pow(2) + (g.x - 0.5).pow(2)).sqrt();
    switch (e) {
        case Emotion::amusement:
            return a * torch::cos(two_pi * 1.5 * r + phase);
        case Emotion::awe:
            return a * (1.0 - 2.0 * g.y);
        case Emotion::contentment:
            return a * torch::sin(two_pi * 2.0 * g.x + phase) * torch::sin(two_pi * 2.0 * g.y);
        case Emotion::excitement:
            return a * torch::sin(two_pi * 8.0 * (g.x + g.y) + phase);
        case Emotion::anger:
            return a * 1.5 * (torch::rand({size, size}, gen) * 2.0 - 1.0);
        case Emotion::disgust: {
            auto noise = torch::rand({1, 1, size, size}, gen) * 2.0 - 1.0;
            noise = F::avg_pool2d(noise, F::AvgPool2dFuncOptions(5).stride(1).padding(2).count_include_pad(false));
            return a * 3.0 * noise.squeeze();
        }
        case Emotion::fear:
            return -4.0 * a * r.pow(2) + a * (torch::rand({size, size}, gen) * 2.0 - 1.0);
        case Emotion::sadness: {
            auto columns = torch::rand({1, size}, gen) * 2.0 - 1.0;
            return a * columns.expand({size, size});
        }
    }
    throw InvalidArgument("unknown category");
}

std::string fill_template(std::string_view tpl, const std::string& k0, const std::string& k1) {
    std::string out(tpl);
    for (auto [key, value] : {std::pair{std::string("{0}"), k0}, std::pair{std::string("{1}"), k1}}) {
        for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key)) out.replace(pos, key.size(), value);
    }
    return out;
}

EmotionDistribution peaked_distribution(Emotion label, std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(1.0, 1.0);
    std::array<double, kNumEmotions> jitter{};
    double total = 0;
    for (auto& v : jitter) total += (v = gamma(rng));
    const double peak = uniform(rng, 0.55, 0.8);
    std::array<double, kNumEmotions> p{};
    for (int i = 0; i < kNumEmotions; ++i) p[i] = (1.0 - peak) * jitter[i] / total;
    p[wheel_position(label)] += peak;
    double s = 0;
    for (double v : p) s += v;
    for (auto& v : p) v /= s;
    return EmotionDistribution::from_probs(p);
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Split hash_split(const std::string& id) {
    const auto bucket = fnv1a(id) % 100;
    return bucket < 70 ? Split::train : bucket < 85 ? Split::val : Split::test;
}

}  // namespace

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw FormatError("unknown split '" + std::string(name) + "'");
}

std::vector<const AnchorSample*> Dataset::subset(Split s) const {
    std::vector<const AnchorSample*> out;
    for (const auto& sample : samples)
        if (sample.split == s) out.push_back(&sample);
    return out;
}

std::vector<std::string> Dataset::all_descriptions() const {
    std::vector<std::string> out;
    for (const auto& s : samples) out.insert(out.end(), s.descriptions.begin(), s.descriptions.end());
    return out;
}

torch::Tensor render_content(const torch::Tensor& luminance) {
    return (0.1 + 0.8 * luminance).unsqueeze(0).expand({3, luminance.size(0), luminance.size(1)}).contiguous();
}

torch::Tensor render_palette(Emotion e, const torch::Tensor& luminance) {
    const auto& stops = kPalettes[static_cast<std::size_t>(wheel_position(e))];
    const auto t = luminance.clamp(0.0, 1.0);
    const auto low = (t * 2.0).clamp_max(1.0);
    const auto high = (t * 2.0 - 1.0).clamp_min(0.0);
    std::vector<torch::Tensor> channels;
    for (std::size_t c = 0; c < 3; ++c) {
        const double d = stops[0][c], m = stops[1][c], l = stops[2][c];
        channels.push_back(torch::where(t < 0.5, d + (m - d) * low, m + (l - m) * high));
    }
    return torch::stack(channels);
}

Dataset generate_synthetic_dataset(const SyntheticConfig& config, std::mt19937_64& rng,
                                   const KeywordLexicon& keywords) {
    if (config.per_category < 8) throw InvalidArgument("at least 8 samples per category are required");
    if (config.resolution < 8) throw InvalidArgument("resolution must be at least 8");
    if (config.val_fraction < 0 || config.test_fraction < 0 || config.val_fraction + config.test_fraction >= 1) {
        throw InvalidArgument("split fractions must be non-negative and leave a training split");
    }
    Dataset ds;
    ds.resolution = config.resolution;
    const auto grid = make_grid(config.resolution);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(rng());
    const auto n = config.per_category;
    const auto n_val = static_cast<std::int64_t>(std::llround(config.val_fraction * double(n)));
    const auto n_test = static_cast<std::int64_t>(std::llround(config.test_fraction * double(n)));

    for (auto e : kAllEmotions) {
        const auto& words = keywords.words(e);
        if (words.empty()) throw InvalidArgument("keyword lexicon has no words for " + std::string(emotion_name(e)));
        std::vector<Split> splits(static_cast<std::size_t>(n), Split::train);
        std::vector<std::size_t> order(splits.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[pick(rng, i)]);
        for (std::int64_t i = 0; i < n_val; ++i) splits[order[static_cast<std::size_t>(i)]] = Split::val;
        for (std::int64_t i = n_val; i < n_val + n_test; ++i) splits[order[static_cast<std::size_t>(i)]] = Split::test;

        for (std::int64_t i = 0; i < n; ++i) {
            AnchorSample s;
            char id[64];
            std::snprintf(id, sizeof(id), "%s_%03d", std::string(emotion_name(e)).c_str(), static_cast<int>(i));
            s.id = id;
            s.label = e;
            s.split = splits[static_cast<std::size_t>(i)];
            const auto lum = scene_luminance(config.resolution, grid, rng);
            const auto textured = (lum + texture(e, config.resolution, grid, rng, gen)).clamp(0.0, 1.0);
            s.image = quantize_8bit(render_palette(e, textured));
            s.content = quantize_8bit(render_content(lum));
            s.distribution = peaked_distribution(e, rng);
            const auto count = 2 + pick(rng, 2);
            std::set<std::size_t> used;
            while (s.descriptions.size() < count) {
                const auto t = pick(rng, kTemplates.size());
                if (!used.insert(t).second) continue;
                const auto& k0 = words[pick(rng, words.size())];
                const auto& k1 = words[pick(rng, words.size())];
                s.descriptions.push_back(fill_template(kTemplates[t], k0, k1));
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "content");
    std::ofstream meta(dir / "meta.jsonl", std::ios::binary);
    if (!meta) throw FormatError("cannot write " + (dir / "meta.jsonl").string());
    for (const auto& s : dataset.samples) {
        write_png(dir / "images" / (s.id + ".png"), s.image);
        if (s.content.defined()) write_png(dir / "content" / (s.id + ".png"), s.content);
        nlohmann::json j;
        j["id"] = s.id;
        j["label"] = std::string(emotion_name(s.label));
        j["distribution"] = s.distribution.probs();
        j["descriptions"] = s.descriptions;
        j["split"] = std::string(split_name(s.split));
        meta << j.dump() << '\n';
    }
}

Dataset load_dataset(const std::filesystem::path& dir, std::int64_t resolution) {
    std::ifstream meta(dir / "meta.jsonl");
    if (!meta) throw FormatError("cannot open " + (dir / "meta.jsonl").string());
    Dataset ds;
    ds.resolution = resolution;
    std::string line;
    int line_no = 0;
    std::set<std::string> ids;
    while (std::getline(meta, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        AnchorSample s;
        try {
            const auto j = nlohmann::json::parse(line);
            s.id = j.at("id").get<std::string>();
            s.label = parse_emotion(j.at("label").get<std::string>());
            const auto probs = j.at("distribution").get<std::vector<double>>();
            s.distribution = EmotionDistribution::from_probs(probs);
            s.descriptions = j.at("descriptions").get<std::vector<std::string>>();
            s.split = j.contains("split") ? parse_split(j.at("split").get<std::string>()) : hash_split(s.id);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        if (s.descriptions.empty()) throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": no descriptions");
        if (!ids.insert(s.id).second) throw FormatError("duplicate sample id " + s.id);
        s.image = resize_image(read_image(dir / "images" / (s.id + ".png")), resolution);
        const auto content_path = dir / "content" / (s.id + ".png");
        s.content = std::filesystem::exists(content_path) ? resize_image(read_image(content_path), resolution)
                                                          : grayscale(s.image);
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw FormatError("dataset " + dir.string() + " has no samples");
    return ds;
}

torch::Tensor grayscale(const torch::Tensor& image) {
    const auto y = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2];
    return y.unsqueeze(0).expand({3, image.size(1), image.size(2)}).contiguous();
}

std::uint64_t image_hash(const torch::Tensor& image) {
    const auto bytes = (image.detach().to(torch::kDouble).clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
    return fnv1a(std::string_view(static_cast<const char*>(bytes.data_ptr()), static_cast<std::size_t>(bytes.numel())));
}

}  // namespace aif
