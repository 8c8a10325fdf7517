// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parley/types.hpp"

namespace parley {

/// What a model call is for. Drives model routing and default decoding settings.
enum class Purpose { Think, Speak, Detect, Normalize, JudgeBreakdown, JudgeScores };

std::string_view to_string(Purpose p) noexcept;
std::optional<Purpose> parse_purpose(std::string_view text);

struct Message {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model_id;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 512;
    Purpose purpose = Purpose::Think;
    // Routing metadata only; never sent over the wire.
    std::optional<std::string> agent;
    std::optional<std::string> session;
};

using Embedding = std::vector<double>;

/// A language-model and embedding service.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::vector<Embedding> embed(std::span<const std::string> texts, const std::string& model) = 0;

    /// Fails fast on bad credentials. Default: nothing to check.
    virtual void preflight() {}

    /// Latency to report in the call log; scripted backends report zero so logs stay reproducible.
    virtual bool reports_latency() const { return true; }
};

/// Maps purposes to model ids. Speak, Detect and the judge purposes use the
/// capable model; Think and Normalize use the economy model.
struct RoutingTable {
    std::string capable = "gpt-4o";
    std::string economy = "gpt-3.5-turbo";
    std::string embedding = "text-embedding-3-small";
    std::map<Purpose, std::string> overrides;

    std::string model_for(Purpose p) const;
};

void to_json(json& j, const RoutingTable& r);
void from_json(const json& j, RoutingTable& r);

struct CallRecord {
    std::uint64_t seq = 0;
    std::string purpose;
    std::string model;
    std::optional<std::string> agent;
    std::optional<std::string> session;
    std::string request_digest;
    std::string response;
    std::int64_t latency_ms = 0;
    std::optional<std::string> error;
};

void to_json(json& j, const CallRecord& r);

/// Append-only, thread-safe. Sequence numbers are assigned at append time.
class CallLog {
public:
    std::uint64_t append(CallRecord record);
    std::vector<CallRecord> records() const;
    std::size_t size() const;
    std::string to_jsonl() const;
    void write_jsonl(const std::filesystem::path& path) const;

private:
    mutable std::mutex mutex_;
    std::vector<CallRecord> records_;
};

/// FNV-1a 64 of the wire-relevant request fields, as 16 hex digits.
std::string request_digest(const ChatRequest& request);

/// Per-purpose decoding defaults.
double default_temperature(Purpose p) noexcept;
int default_max_tokens(Purpose p) noexcept;

/// Routing, logging and concurrency limiting in front of a ChatBackend.
/// This is what sessions and evaluators hold.
class ModelClient {
public:
    static constexpr std::ptrdiff_t max_concurrency = 64;

    ModelClient(std::shared_ptr<ChatBackend> backend, RoutingTable routing, std::size_t concurrency = 4,
                std::shared_ptr<CallLog> log = std::make_shared<CallLog>());

    ModelClient(const ModelClient&) = delete;
    ModelClient& operator=(const ModelClient&) = delete;

    std::string chat(Purpose purpose, std::vector<Message> messages, std::optional<std::string> agent = std::nullopt);

    /// One vector per text. The first call fixes the session's embedding dimension;
    /// any later mismatch is a ConfigError.
    std::vector<Embedding> embed_texts(std::span<const std::string> texts);

    void set_session_tag(std::optional<std::string> tag) { session_tag_ = std::move(tag); }
    const std::optional<std::string>& session_tag() const noexcept { return session_tag_; }

    const RoutingTable& routing() const noexcept { return routing_; }
    CallLog& log() noexcept { return *log_; }
    std::shared_ptr<CallLog> shared_log() const { return log_; }
    ChatBackend& backend() noexcept { return *backend_; }
    std::optional<std::size_t> embedding_dimension() const;

private:
    std::shared_ptr<ChatBackend> backend_;
    RoutingTable routing_;
    std::shared_ptr<CallLog> log_;
    std::counting_semaphore<max_concurrency> slots_;
    std::optional<std::string> session_tag_;
    mutable std::mutex dim_mutex_;
    std::optional<std::size_t> embedding_dim_;
};

// ---------------------------------------------------------------------------
// Scripted backend

/// One queue of canned responses. A queue without an agent (or session)
/// matches any agent (or session); more specific queues win.
struct ScriptQueue {
    Purpose purpose = Purpose::Think;
    std::optional<std::string> agent;
    std::optional<std::string> session;
    std::vector<std::string> responses;
    // Wrap around instead of failing once exhausted. Must be requested explicitly.
    bool repeat = false;
};

struct Script {
    std::vector<ScriptQueue> queues;
    std::map<std::string, Embedding> embeddings;
    std::size_t embedding_dim = 16;
};

Script parse_script(const json& j);
Script load_script(const std::filesystem::path& path);
json script_to_json(const Script& script);

/// Deterministic unit vector derived from the text's FNV-1a hash.
Embedding hash_embedding(std::string_view text, std::size_t dim);

class ScriptedBackend final : public ChatBackend {
public:
    explicit ScriptedBackend(Script script);

    std::string complete(const ChatRequest& request) override;
    std::vector<Embedding> embed(std::span<const std::string> texts, const std::string& model) override;
    bool reports_latency() const override { return false; }

    /// Number of responses consumed so far from every queue.
    std::size_t consumed() const;

private:
    mutable std::mutex mutex_;
    Script script_;
    std::vector<std::size_t> cursors_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backend

struct HttpOptions {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    int max_attempts = 4;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{8000};
    std::chrono::seconds timeout{60};
};

/// POST {base_url}/chat/completions and {base_url}/embeddings with a bearer token.
/// Transport errors, 429 and 5xx are retried with exponential backoff; 401/403 throw AuthError at once.
class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpOptions options);

    std::string complete(const ChatRequest& request) override;
    std::vector<Embedding> embed(std::span<const std::string> texts, const std::string& model) override;
    /// GET {base_url}/models. A 404 is accepted (some local servers lack the route).
    void preflight() override;

private:
    struct Response {
        int status = 0;
        std::string body;
    };
    Response send(const std::string& method, const std::string& path, const std::string& body);

    HttpOptions options_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

// ---------------------------------------------------------------------------
// Configuration

enum class BackendKind { Live, Scripted };

struct BackendConfig {
    BackendKind kind = BackendKind::Live;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::optional<std::filesystem::path> api_key_file;
    std::optional<std::filesystem::path> script_path;
    int max_attempts = 4;
    int initial_backoff_ms = 500;
    int timeout_s = 60;
    std::size_t concurrency = 4;
};

void to_json(json& j, const BackendConfig& c);
/// Relative script_path/api_key_file entries are resolved against base_dir by parse_backend_config.
void from_json(const json& j, BackendConfig& c);
BackendConfig parse_backend_config(const json& j, const std::filesystem::path& base_dir);

/// "live" or "scripted:<path>".
BackendConfig apply_backend_flag(BackendConfig config, std::string_view flag);

/// Reads the bearer credential from the configured file or environment variable.
std::string resolve_api_key(const BackendConfig& config);

/// Scripted configs get a fresh, independent instance on every call.
std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config);

} // namespace parley
