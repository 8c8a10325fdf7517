// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "parley/backend.hpp"
#include "parley/engine.hpp"
#include "parley/scenario.hpp"

namespace parley::testing {

std::filesystem::path fixture_dir();      // repo fixtures/
std::filesystem::path test_fixture_dir(); // tests/fixtures/

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

ScriptQueue queue(Purpose purpose, std::vector<std::string> responses, std::optional<std::string> agent = std::nullopt,
                  bool repeat = false);

/// Client over a fresh ScriptedBackend.
std::unique_ptr<ModelClient> scripted_client(Script script, std::size_t concurrency = 4);

/// Minimal valid scenario with `count` characters named "Agent 1".."Agent N".
Scenario small_scenario(std::size_t count);

Scenario golden_scenario();
EngineOptions golden_options();
/// Runs the committed golden fixture and fills the header fields the CLI would.
Transcript run_golden();
std::filesystem::path golden_transcript_path();

/// Random scripted session: random bids, random designations (including
/// self-address, unknown names and broadcasts), fixed utterances.
struct RandomSession {
    Scenario scenario;
    EngineOptions options;
    Script script;
};
RandomSession random_session(std::uint64_t seed, Condition condition, std::size_t agents, int turn_budget);
Transcript run_random_session(const RandomSession& session);

/// Turn-taking rule violations in a finished transcript; empty when all hold.
std::vector<std::string> turn_taking_violations(const Transcript& t, std::size_t roster_size);

} // namespace parley::testing
