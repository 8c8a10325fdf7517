// SPDX-License-Identifier: Apache-2.0
#include "parley/backend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "parley/error.hpp"
#include "text_util.hpp"

namespace parley {

namespace {

constexpr std::array<std::pair<Purpose, std::string_view>, 6> purpose_names{{
    {Purpose::Think, "think"},
    {Purpose::Speak, "speak"},
    {Purpose::Detect, "detect"},
    {Purpose::Normalize, "normalize"},
    {Purpose::JudgeBreakdown, "judge_breakdown"},
    {Purpose::JudgeScores, "judge_scores"},
}};

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

} // namespace

std::string_view to_string(Purpose p) noexcept {
    for (const auto& [purpose, name] : purpose_names)
        if (purpose == p) return name;
    return "?";
}

std::optional<Purpose> parse_purpose(std::string_view text) {
    const auto key = detail::lower(detail::trim(text));
    for (const auto& [purpose, name] : purpose_names)
        if (name == key) return purpose;
    return std::nullopt;
}

std::string RoutingTable::model_for(Purpose p) const {
    if (auto it = overrides.find(p); it != overrides.end()) return it->second;
    switch (p) {
    case Purpose::Think:
    case Purpose::Normalize: return economy;
    case Purpose::Speak:
    case Purpose::Detect:
    case Purpose::JudgeBreakdown:
    case Purpose::JudgeScores: return capable;
    }
    return capable;
}

void to_json(json& j, const RoutingTable& r) {
    j = json{{"capable", r.capable}, {"economy", r.economy}, {"embedding", r.embedding}};
    json overrides = json::object();
    for (const auto& [purpose, model] : r.overrides)
        overrides[std::string(to_string(purpose))] = model;
    j["overrides"] = overrides;
}

void from_json(const json& j, RoutingTable& r) {
    r = RoutingTable{};
    r.capable = j.value("capable", r.capable);
    r.economy = j.value("economy", r.economy);
    r.embedding = j.value("embedding", r.embedding);
    if (j.contains("overrides")) {
        for (const auto& [key, value] : j.at("overrides").items()) {
            const auto purpose = parse_purpose(key);
            if (!purpose) throw ConfigError("routing override for unknown purpose '" + key + "'");
            r.overrides[*purpose] = value.get<std::string>();
        }
    }
}

void to_json(json& j, const CallRecord& r) {
    j = json{{"seq", r.seq},
             {"purpose", r.purpose},
             {"model", r.model},
             {"agent", r.agent ? json(*r.agent) : json(nullptr)},
             {"session", r.session ? json(*r.session) : json(nullptr)},
             {"request_digest", r.request_digest},
             {"response", r.response},
             {"latency_ms", r.latency_ms}};
    if (r.error) j["error"] = *r.error;
}

std::uint64_t CallLog::append(CallRecord record) {
    std::lock_guard lock(mutex_);
    record.seq = records_.size();
    records_.push_back(std::move(record));
    return records_.back().seq;
}

std::vector<CallRecord> CallLog::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t CallLog::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::string CallLog::to_jsonl() const {
    std::string out;
    for (const auto& record : records()) {
        out += json(record).dump();
        out += '\n';
    }
    return out;
}

void CallLog::write_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write call log " + path.string());
    out << to_jsonl();
}

std::string request_digest(const ChatRequest& request) {
    auto h = detail::fnv1a(request.model_id);
    for (const auto& m : request.messages) {
        h = detail::fnv1a("\x1f", h);
        h = detail::fnv1a(m.role, h);
        h = detail::fnv1a("\x1e", h);
        h = detail::fnv1a(m.content, h);
    }
    return detail::hex64(h);
}

double default_temperature(Purpose p) noexcept {
    switch (p) {
    case Purpose::Speak:
    case Purpose::Think: return 0.7;
    default: return 0.0;
    }
}

int default_max_tokens(Purpose p) noexcept {
    switch (p) {
    case Purpose::Detect: return 128;
    case Purpose::Think:
    case Purpose::Speak:
    case Purpose::Normalize: return 400;
    case Purpose::JudgeBreakdown:
    case Purpose::JudgeScores: return 800;
    }
    return 400;
}

ModelClient::ModelClient(std::shared_ptr<ChatBackend> backend, RoutingTable routing, std::size_t concurrency,
                         std::shared_ptr<CallLog> log)
    : backend_(std::move(backend)),
      routing_(std::move(routing)),
      log_(std::move(log)),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(concurrency, 1, max_concurrency))) {
    if (!backend_) throw ConfigError("model client requires a backend");
    if (!log_) log_ = std::make_shared<CallLog>();
}

namespace {
class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<ModelClient::max_concurrency>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<ModelClient::max_concurrency>& s_;
};
} // namespace

std::string ModelClient::chat(Purpose purpose, std::vector<Message> messages, std::optional<std::string> agent) {
    if (messages.empty()) throw ConfigError("chat request without messages");
    ChatRequest request;
    request.model_id = routing_.model_for(purpose);
    request.messages = std::move(messages);
    request.temperature = default_temperature(purpose);
    request.max_tokens = default_max_tokens(purpose);
    request.purpose = purpose;
    request.agent = std::move(agent);
    request.session = session_tag_;

    CallRecord record;
    record.purpose = std::string(to_string(purpose));
    record.model = request.model_id;
    record.agent = request.agent;
    record.session = request.session;
    record.request_digest = request_digest(request);

    SlotGuard guard(slots_);
    const auto started = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        if (!backend_->reports_latency()) return std::int64_t{0};
        return static_cast<std::int64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                             std::chrono::steady_clock::now() - started)
                                             .count());
    };
    try {
        record.response = backend_->complete(request);
    } catch (const std::exception& e) {
        record.latency_ms = elapsed();
        record.error = e.what();
        log_->append(std::move(record));
        throw;
    }
    record.latency_ms = elapsed();
    std::string response = record.response;
    log_->append(std::move(record));
    return response;
}

std::vector<Embedding> ModelClient::embed_texts(std::span<const std::string> texts) {
    if (texts.empty()) return {};
    CallRecord record;
    record.purpose = "embed";
    record.model = routing_.embedding;
    record.session = session_tag_;
    auto digest = detail::fnv1a(routing_.embedding);
    for (const auto& t : texts) {
        digest = detail::fnv1a("\x1f", digest);
        digest = detail::fnv1a(t, digest);
    }
    record.request_digest = detail::hex64(digest);

    std::vector<Embedding> vectors;
    {
        SlotGuard guard(slots_);
        const auto started = std::chrono::steady_clock::now();
        try {
            vectors = backend_->embed(texts, routing_.embedding);
        } catch (const std::exception& e) {
            record.error = e.what();
            log_->append(std::move(record));
            throw;
        }
        if (backend_->reports_latency())
            record.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - started)
                                    .count();
    }
    record.response = std::to_string(vectors.size()) + " vectors";
    log_->append(std::move(record));
    if (vectors.size() != texts.size())
        throw BackendError("embedding service returned " + std::to_string(vectors.size()) + " vectors for " +
                           std::to_string(texts.size()) + " texts");
    std::lock_guard lock(dim_mutex_);
    for (const auto& v : vectors) {
        if (v.empty()) throw BackendError("embedding service returned an empty vector");
        if (!embedding_dim_) embedding_dim_ = v.size();
        if (v.size() != *embedding_dim_)
            throw ConfigError("embedding dimension changed within a session: " + std::to_string(*embedding_dim_) +
                              " vs " + std::to_string(v.size()));
    }
    return vectors;
}

std::optional<std::size_t> ModelClient::embedding_dimension() const {
    std::lock_guard lock(dim_mutex_);
    return embedding_dim_;
}

// ---------------------------------------------------------------------------

Script parse_script(const json& j) {
    Script script;
    script.embedding_dim = j.value("embedding_dim", std::size_t{16});
    if (script.embedding_dim == 0) throw ConfigError("script embedding_dim must be positive");
    for (const auto& q : j.value("queues", json::array())) {
        ScriptQueue queue;
        const auto purpose = parse_purpose(q.at("purpose").get<std::string>());
        if (!purpose) throw ConfigError("script queue with unknown purpose " + q.at("purpose").dump());
        queue.purpose = *purpose;
        queue.agent = opt_string(q, "agent");
        queue.session = opt_string(q, "session");
        queue.repeat = q.value("repeat", false);
        queue.responses = q.at("responses").get<std::vector<std::string>>();
        if (queue.repeat && queue.responses.empty())
            throw ConfigError("repeating script queue needs at least one response");
        script.queues.push_back(std::move(queue));
    }
    if (j.contains("embeddings")) {
        for (const auto& [text, vec] : j.at("embeddings").items()) {
            auto v = vec.get<Embedding>();
            if (v.size() != script.embedding_dim)
                throw ConfigError("script embedding for '" + text + "' has dimension " + std::to_string(v.size()) +
                                  ", expected " + std::to_string(script.embedding_dim));
            script.embeddings.emplace(text, std::move(v));
        }
    }
    return script;
}

Script load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open script " + path.string());
    try {
        return parse_script(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError("malformed script " + path.string() + ": " + e.what());
    }
}

json script_to_json(const Script& script) {
    json queues = json::array();
    for (const auto& q : script.queues) {
        json entry{{"purpose", to_string(q.purpose)}, {"responses", q.responses}};
        if (q.agent) entry["agent"] = *q.agent;
        if (q.session) entry["session"] = *q.session;
        if (q.repeat) entry["repeat"] = true;
        queues.push_back(std::move(entry));
    }
    json j{{"schema_version", 1}, {"embedding_dim", script.embedding_dim}, {"queues", queues}};
    if (!script.embeddings.empty()) j["embeddings"] = script.embeddings;
    return j;
}

Embedding hash_embedding(std::string_view text, std::size_t dim) {
    std::uint64_t state = detail::fnv1a(text);
    const auto splitmix = [&state] {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    Embedding v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = static_cast<double>(splitmix() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        norm += x * x;
    }
    if (norm == 0.0) {
        v.front() = 1.0;
        return v;
    }
    norm = std::sqrt(norm);
    for (auto& x : v)
        x /= norm;
    return v;
}

ScriptedBackend::ScriptedBackend(Script script) : script_(std::move(script)), cursors_(script_.queues.size(), 0) {}

std::string ScriptedBackend::complete(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    std::optional<std::size_t> best;
    int best_rank = -1;
    for (std::size_t i = 0; i < script_.queues.size(); ++i) {
        const auto& q = script_.queues[i];
        if (q.purpose != request.purpose) continue;
        if (q.agent && q.agent != request.agent) continue;
        if (q.session && q.session != request.session) continue;
        const int rank = (q.agent ? 2 : 0) + (q.session ? 1 : 0);
        if (rank > best_rank) {
            best_rank = rank;
            best = i;
        }
    }
    const auto describe = [&] {
        std::string d = "purpose=" + std::string(to_string(request.purpose));
        if (request.agent) d += " agent=" + *request.agent;
        if (request.session) d += " session=" + *request.session;
        return d;
    };
    if (!best) throw ScriptExhausted("no scripted responses for " + describe());
    const auto& q = script_.queues[*best];
    auto& cursor = cursors_[*best];
    if (cursor >= q.responses.size()) {
        if (!q.repeat)
            throw ScriptExhausted("script exhausted for " + describe() + " after " +
                                  std::to_string(q.responses.size()) + " responses");
        cursor = 0;
    }
    return q.responses[cursor++];
}

std::vector<Embedding> ScriptedBackend::embed(std::span<const std::string> texts, const std::string&) {
    std::lock_guard lock(mutex_);
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        if (auto it = script_.embeddings.find(text); it != script_.embeddings.end())
            out.push_back(it->second);
        else
            out.push_back(hash_embedding(text, script_.embedding_dim));
    }
    return out;
}

std::size_t ScriptedBackend::consumed() const {
    std::lock_guard lock(mutex_);
    std::size_t total = 0;
    for (auto c : cursors_)
        total += c;
    return total;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const BackendConfig& c) {
    j = json{{"kind", c.kind == BackendKind::Live ? "live" : "scripted"},
             {"base_url", c.base_url},
             {"api_key_env", c.api_key_env},
             {"max_attempts", c.max_attempts},
             {"initial_backoff_ms", c.initial_backoff_ms},
             {"timeout_s", c.timeout_s},
             {"concurrency", c.concurrency}};
    if (c.api_key_file) j["api_key_file"] = c.api_key_file->string();
    if (c.script_path) j["script_path"] = c.script_path->string();
}

void from_json(const json& j, BackendConfig& c) {
    c = BackendConfig{};
    const auto kind = j.value("kind", std::string("live"));
    if (kind == "live")
        c.kind = BackendKind::Live;
    else if (kind == "scripted")
        c.kind = BackendKind::Scripted;
    else
        throw ConfigError("unknown backend kind '" + kind + "'");
    c.base_url = j.value("base_url", c.base_url);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    if (auto f = opt_string(j, "api_key_file")) c.api_key_file = *f;
    if (auto s = opt_string(j, "script_path")) c.script_path = *s;
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.initial_backoff_ms = j.value("initial_backoff_ms", c.initial_backoff_ms);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.concurrency = j.value("concurrency", c.concurrency);
    if (c.max_attempts < 1) throw ConfigError("backend max_attempts must be >= 1");
    if (c.kind == BackendKind::Scripted && !c.script_path) throw ConfigError("scripted backend needs script_path");
}

BackendConfig parse_backend_config(const json& j, const std::filesystem::path& base_dir) {
    auto c = j.get<BackendConfig>();
    if (c.script_path && c.script_path->is_relative()) c.script_path = base_dir / *c.script_path;
    if (c.api_key_file && c.api_key_file->is_relative()) c.api_key_file = base_dir / *c.api_key_file;
    return c;
}

BackendConfig apply_backend_flag(BackendConfig config, std::string_view flag) {
    constexpr std::string_view scripted_prefix = "scripted:";
    if (flag == "live") {
        config.kind = BackendKind::Live;
        return config;
    }
    if (flag.starts_with(scripted_prefix) && flag.size() > scripted_prefix.size()) {
        config.kind = BackendKind::Scripted;
        config.script_path = std::filesystem::path(std::string(flag.substr(scripted_prefix.size())));
        return config;
    }
    throw ConfigError("--backend expects 'live' or 'scripted:<path>', got '" + std::string(flag) + "'");
}

std::string resolve_api_key(const BackendConfig& config) {
    if (config.api_key_file) {
        std::ifstream in(*config.api_key_file);
        if (!in) throw ConfigError("cannot read api key file " + config.api_key_file->string());
        std::stringstream buffer;
        buffer << in.rdbuf();
        return std::string(detail::trim(buffer.str()));
    }
    if (const char* value = std::getenv(config.api_key_env.c_str())) return std::string(detail::trim(value));
    return {};
}

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config) {
    if (config.kind == BackendKind::Scripted) {
        if (!config.script_path) throw ConfigError("scripted backend needs a script path");
        return std::make_shared<ScriptedBackend>(load_script(*config.script_path));
    }
    HttpOptions options;
    options.base_url = config.base_url;
    options.api_key = resolve_api_key(config);
    options.max_attempts = config.max_attempts;
    options.initial_backoff = std::chrono::milliseconds(config.initial_backoff_ms);
    options.timeout = std::chrono::seconds(config.timeout_s);
    if (options.api_key.empty())
        spdlog::warn("no API credential found (env {} unset, no key file); requests go unauthenticated",
                     config.api_key_env);
    return std::make_shared<HttpBackend>(std::move(options));
}

} // namespace parley
