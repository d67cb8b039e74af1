#include "aif/llm_client.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "aif/errors.hpp"

namespace aif {

HttpLanguageModelClient::HttpLanguageModelClient(Options options) : options_(std::move(options)) {
    const auto scheme_end = options_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("language model endpoint lacks a scheme: " + options_.endpoint);
    const auto path_start = options_.endpoint.find('/', scheme_end + 3);
    base_ = options_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : options_.endpoint.substr(path_start);
}

std::unique_ptr<HttpLanguageModelClient> HttpLanguageModelClient::from_environment() {
    const char* endpoint = std::getenv("AIF_LLM_ENDPOINT");
    if (!endpoint || !*endpoint) return nullptr;
    Options opt;
    opt.endpoint = endpoint;
    if (const char* key = std::getenv("AIF_LLM_API_KEY")) opt.api_key = key;
    if (const char* model = std::getenv("AIF_LLM_MODEL"); model && *model) opt.model = model;
    return std::make_unique<HttpLanguageModelClient>(std::move(opt));
}

std::string HttpLanguageModelClient::complete(const std::string& prompt) {
    httplib::Client cli(base_);
    const auto secs = static_cast<time_t>(options_.timeout.count());
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    const nlohmann::json body = {
        {"model", options_.model},
        {"temperature", 0},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw Error("language model request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error("language model returned HTTP " + std::to_string(res->status));
    try {
        const auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed language model reply: ") + e.what());
    }
}

}  // namespace aif
