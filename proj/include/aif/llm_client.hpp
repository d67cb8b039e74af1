#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "aif/affective_text.hpp"

namespace aif {

/// Chat-completions client speaking the common OpenAI-style JSON protocol:
/// POST {"model", "messages": [{"role": "user", "content": prompt}]} and read
/// choices[0].message.content. Any transport or protocol problem throws.
class HttpLanguageModelClient : public LanguageModelClient {
public:
    struct Options {
        std::string endpoint;  ///< e.g. http://localhost:8080/v1/chat/completions
        std::string api_key;   ///< sent as a bearer token when non-empty
        std::string model = "gpt-4o";
        std::chrono::seconds timeout{30};
    };

    explicit HttpLanguageModelClient(Options options);

    /// Reads AIF_LLM_ENDPOINT, AIF_LLM_API_KEY and AIF_LLM_MODEL. Returns null
    /// when no endpoint is configured.
    static std::unique_ptr<HttpLanguageModelClient> from_environment();

    std::string complete(const std::string& prompt) override;

private:
    Options options_;
    std::string base_;  // scheme://host[:port]
    std::string path_;
};

}  // namespace aif
