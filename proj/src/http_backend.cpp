// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <algorithm>
#include <thread>

#include <spdlog/spdlog.h>

#include "parley/backend.hpp"
#include "parley/error.hpp"

namespace parley {

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
    const auto& url = options_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_port_ = url;
    } else {
        scheme_host_port_ = url.substr(0, path_start);
        path_prefix_ = url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/')
            path_prefix_.pop_back();
    }
    if (options_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

HttpBackend::Response HttpBackend::send(const std::string& method, const std::string& path, const std::string& body) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    const std::string full_path = path_prefix_ + path;
    std::string last_error;
    auto delay = options_.initial_backoff;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        httplib::Result result = method == "GET" ? client.Get(full_path, headers)
                                                 : client.Post(full_path, headers, body, "application/json");
        if (!result) {
            last_error = "transport error: " + httplib::to_string(result.error());
        } else {
            const int status = result->status;
            if (status == 401 || status == 403)
                throw AuthError("authentication rejected by " + scheme_host_port_ + " (HTTP " +
                                std::to_string(status) + ")");
            if (status != 429 && status < 500) return {status, result->body};
            last_error = "HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200);
        }
        if (attempt < options_.max_attempts) {
            spdlog::warn("{} {} failed ({}), retry {}/{} in {} ms", method, full_path, last_error, attempt,
                         options_.max_attempts - 1, delay.count());
            std::this_thread::sleep_for(delay);
            delay = std::min(delay * 2, options_.max_backoff);
        }
    }
    throw BackendError(method + " " + full_path + " failed after " + std::to_string(options_.max_attempts) +
                       " attempts: " + last_error);
}

std::string HttpBackend::complete(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    const json body{{"model", request.model_id},
                    {"messages", messages},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_tokens}};
    const auto response = send("POST", "/chat/completions", body.dump());
    if (response.status < 200 || response.status >= 300)
        throw BackendError("chat completion failed with HTTP " + std::to_string(response.status) + ": " +
                           response.body.substr(0, 200));
    try {
        const auto parsed = json::parse(response.body);
        const auto& content = parsed.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed chat completion response: ") + e.what());
    }
}

std::vector<Embedding> HttpBackend::embed(std::span<const std::string> texts, const std::string& model) {
    const json body{{"model", model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    const auto response = send("POST", "/embeddings", body.dump());
    if (response.status < 200 || response.status >= 300)
        throw BackendError("embedding request failed with HTTP " + std::to_string(response.status));
    try {
        const auto parsed = json::parse(response.body);
        std::vector<std::pair<std::size_t, Embedding>> indexed;
        std::size_t position = 0;
        for (const auto& item : parsed.at("data")) {
            indexed.emplace_back(item.value("index", position), item.at("embedding").get<Embedding>());
            ++position;
        }
        std::sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<Embedding> out;
        out.reserve(indexed.size());
        for (auto& [index, vec] : indexed)
            out.push_back(std::move(vec));
        return out;
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed embedding response: ") + e.what());
    }
}

void HttpBackend::preflight() {
    const auto response = send("GET", "/models", {});
    if (response.status >= 400 && response.status != 404)
        throw BackendError("preflight against " + scheme_host_port_ + " returned HTTP " +
                           std::to_string(response.status));
}

} // namespace parley
