#include "aif/affective_text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "aif/errors.hpp"

namespace aif {

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    return in;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    return fields;
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string trim(std::string_view s) {
    auto begin = s.begin();
    auto end = s.end();
    while (begin != end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
    while (end != begin && std::isspace(static_cast<unsigned char>(*(end - 1)))) --end;
    return std::string(begin, end);
}

double parse_unit(const std::string& s, int line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !(v >= 0.0 && v <= 1.0)) {
        throw FormatError("VAD lexicon line " + std::to_string(line_no) + ": score '" + s + "' not in [0,1]");
    }
    return v;
}

}  // namespace

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("AIF_DATA_DIR"); env && *env) return env;
    return AIF_DATA_DIR;
}

VadLexicon VadLexicon::load(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse(in);
}

VadLexicon VadLexicon::parse(std::istream& in) {
    VadLexicon lex;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (is_blank(line)) continue;
        const auto f = split_tabs(line);
        if (f.size() != 4 || f[0].empty()) {
            throw FormatError("VAD lexicon line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
        }
        lex.entries_[f[0]] = VadTriple{parse_unit(f[1], line_no), parse_unit(f[2], line_no), parse_unit(f[3], line_no)};
    }
    return lex;
}

VadTriple VadLexicon::lookup(std::string_view word) const {
    if (word.empty()) throw InvalidArgument("VAD lookup of an empty word");
    const auto it = entries_.find(std::string(word));
    return it == entries_.end() ? kNeutralVad : it->second;
}

KeywordLexicon KeywordLexicon::load(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse(in);
}

KeywordLexicon KeywordLexicon::parse(std::istream& in) {
    KeywordLexicon lex;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (is_blank(line)) continue;
        const auto f = split_tabs(line);
        if (f.size() != 2 || f[0].empty()) {
            throw FormatError("keyword lexicon line " + std::to_string(line_no) + ": expected word<TAB>category");
        }
        Emotion e;
        try {
            e = parse_emotion(f[1]);
        } catch (const InvalidArgument& err) {
            throw FormatError("keyword lexicon line " + std::to_string(line_no) + ": " + err.what());
        }
        if (lex.index_.emplace(f[0], e).second) {
            lex.by_category_[static_cast<std::size_t>(wheel_position(e))].push_back(f[0]);
        }
    }
    return lex;
}

std::optional<Emotion> KeywordLexicon::category(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::vector<std::string>& KeywordLexicon::words(Emotion e) const {
    return by_category_[static_cast<std::size_t>(wheel_position(e))];
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '\'') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<unk>");
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts) {
        for (auto& w : tokenize(t)) words.insert(std::move(w));
    }
    Vocabulary v;
    for (const auto& w : words) v.add(w);
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    Vocabulary v;
    std::string line;
    std::int64_t n = 0;
    while (std::getline(in, line)) {
        if (n++ < 2) continue;  // reserved entries are rebuilt by the constructor
        if (!line.empty()) v.add(line);
    }
    return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    for (const auto& w : words_) out << w << '\n';
}

void Vocabulary::add(const std::string& word) {
    if (ids_.contains(word)) return;
    ids_.emplace(word, static_cast<std::int64_t>(words_.size()));
    words_.push_back(word);
}

std::int64_t Vocabulary::id(std::string_view word) const {
    const auto it = ids_.find(std::string(word));
    return it == ids_.end() ? kUnknown : it->second;
}

std::vector<std::int64_t> Vocabulary::encode(const std::vector<std::string>& tokens, std::int64_t length) const {
    std::vector<std::int64_t> ids(static_cast<std::size_t>(length), kPad);
    const auto n = std::min<std::size_t>(tokens.size(), ids.size());
    for (std::size_t i = 0; i < n; ++i) ids[i] = id(tokens[i]);
    return ids;
}

void TokenSequence::validate() const {
    if (tokens.empty()) throw ShapeError("token sequence is empty");
    if (!embeddings.defined() || embeddings.dim() != 2 ||
        embeddings.size(0) != static_cast<std::int64_t>(tokens.size())) {
        throw ShapeError("embedding rows do not match the " + std::to_string(tokens.size()) + " tokens");
    }
}

torch::Tensor vad_matrix(const std::vector<std::string>& tokens, const VadLexicon& lexicon) {
    auto out = torch::empty({static_cast<std::int64_t>(tokens.size()), kVadChannels}, torch::kDouble);
    auto acc = out.accessor<double, 2>();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto v = lexicon.lookup(tokens[i]);
        acc[static_cast<std::int64_t>(i)][0] = v.valence;
        acc[static_cast<std::int64_t>(i)][1] = v.arousal;
        acc[static_cast<std::int64_t>(i)][2] = v.dominance;
    }
    return out;
}

torch::Tensor augment_tokens(const TokenSequence& text, const VadLexicon& lexicon) {
    text.validate();
    const auto vad = vad_matrix(text.tokens, lexicon).to(text.embeddings.options());
    return torch::cat({text.embeddings, vad}, 1);
}

RichPrompt offline_enhance(std::string_view description, const KeywordLexicon& lexicon) {
    if (trim(description).empty()) throw InvalidArgument("description is empty");
    RichPrompt p;
    p.original = std::string(description);
    std::array<int, kNumEmotions> votes{};
    std::array<int, kNumEmotions> first_seen{};
    first_seen.fill(-1);
    int order = 0;
    for (const auto& tok : tokenize(description)) {
        const auto cat = lexicon.category(tok);
        if (!cat) continue;
        if (std::find(p.keywords.begin(), p.keywords.end(), tok) == p.keywords.end()) p.keywords.push_back(tok);
        const auto i = static_cast<std::size_t>(wheel_position(*cat));
        ++votes[i];
        if (first_seen[i] < 0) first_seen[i] = order++;
    }
    Emotion dominant = Emotion::contentment;
    int best = 0;
    for (int i = 0; i < kNumEmotions; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const auto cur = static_cast<std::size_t>(wheel_position(dominant));
        if (votes[u] > best || (votes[u] == best && best > 0 && first_seen[u] < first_seen[cur])) {
            best = votes[u];
            dominant = static_cast<Emotion>(i);
        }
    }
    p.directive = "emphasize " + std::string(emotion_name(dominant)) + " atmosphere";
    p.combined = p.original + " " + p.directive;
    return p;
}

namespace {

std::vector<std::string> parse_keywords(const std::string& answer) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        auto t = trim(cur);
        std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
        while (!t.empty() && (t.back() == '.' || t.back() == ';')) t.pop_back();
        if (!t.empty()) out.push_back(t);
        cur.clear();
    };
    for (char c : answer) {
        if (c == ',' || c == '\n') {
            flush();
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

}  // namespace

RichPrompt cot_enhance(std::string_view description, LanguageModelClient& client, const KeywordLexicon& lexicon) {
    if (trim(description).empty()) throw InvalidArgument("description is empty");
    const std::string desc(description);
    try {
        const std::string keyword_answer = client.complete(
            "Step 1. Analyze the following text description and extract the emotional keywords it "
            "expresses. Answer with a comma-separated list of words only.\nDescription: " + desc);
        auto keywords = parse_keywords(keyword_answer);
        if (keywords.empty()) throw Error("language model returned no keywords");

        const std::string directive = trim(client.complete(
            "Step 2. Using the emotional keywords [" + join(keywords, ", ") +
            "], formulate one short enhancement directive describing how the image content should "
            "convey these emotions. Answer with the directive only."));
        if (directive.empty()) throw Error("language model returned an empty directive");

        const std::string answer = trim(client.complete(
            "Step 3. Combine the original text description with the enhancement directive into one rich "
            "emotional prompt. Keep both texts verbatim.\nDescription: " + desc + "\nDirective: " + directive));
        if (answer.empty()) throw Error("language model returned an empty prompt");

        RichPrompt p;
        p.original = desc;
        p.keywords = std::move(keywords);
        p.directive = directive;
        const bool complete = answer.find(desc) != std::string::npos && answer.find(directive) != std::string::npos;
        p.combined = complete ? answer : desc + " " + directive + " " + answer;
        return p;
    } catch (const std::exception&) {
        RichPrompt p = offline_enhance(description, lexicon);
        p.fallback = true;
        return p;
    }
}

RichPrompt enhance_description(std::string_view description, LanguageModelClient* client,
                               const KeywordLexicon& lexicon) {
    return client ? cot_enhance(description, *client, lexicon) : offline_enhance(description, lexicon);
}

}  // namespace aif
