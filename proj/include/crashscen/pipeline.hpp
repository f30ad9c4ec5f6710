#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crashscen/bayesnet.hpp"
#include "crashscen/event_codec.hpp"
#include "crashscen/seqdist.hpp"

namespace crashscen {

struct PipelineConfig {
    std::filesystem::path workdir = "crashscen-work";
    /// Raw CRSS-shaped inputs; default to workdir/raw/*.csv.
    std::filesystem::path accident;
    std::filesystem::path vehicle;
    std::filesystem::path event;

    std::size_t synth_crashes = 5000;
    std::uint64_t seed = 7;

    CostScheme costs;
    bool binary_matrix = true;

    std::size_t k_min = 2;
    std::size_t k_max = 25;
    /// Types per configuration; unset configurations use the built-in defaults.
    std::map<CrashConfig, std::size_t> k;
    bool k_auto = false;

    ScoreConfig score;
    double alpha = 1e-3;
    std::size_t restarts = 0;
    std::filesystem::path constraints;
    std::vector<std::pair<std::string, std::string>> forbid;
    std::vector<std::pair<std::string, std::string>> force;
    double weak_threshold = 0.0;

    std::filesystem::path queries;
    std::size_t replications = 1000;
    std::size_t samples = 10000;
    std::optional<double> scale;

    unsigned threads = 0;

    /// Applies one key = value setting; throws ConfigError for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    /// Key/value text: `key = value` lines, `#` comments.
    void apply_text(std::string_view text, const std::string& source = "<config>");
    void apply_file(const std::filesystem::path& path);

    std::filesystem::path raw_accident() const;
    std::filesystem::path raw_vehicle() const;
    std::filesystem::path raw_event() const;
};

struct StageSummary {
    std::string stage;
    std::vector<std::string> artifacts;
    std::map<std::string, std::string> stats;
    std::vector<std::string> warnings;
};

/// Stage names in execution order (without "all").
const std::vector<std::string>& pipeline_stages();

/// Runs one stage reading its inputs from the workdir. Artifacts are written
/// with a `.partial` suffix and renamed once the stage succeeds.
StageSummary run_stage(std::string_view stage, const PipelineConfig& config);

/// Runs every stage (synth first when `synthesize`).
std::vector<StageSummary> run_all(const PipelineConfig& config, bool synthesize);

std::string summary_json(const std::vector<StageSummary>& summaries, int exit_code,
                         const std::string& error = {});

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);
/// Relative path → digest for every regular file below `dir` except manifest.json.
std::map<std::string, std::string> directory_digests(const std::filesystem::path& dir);

/// Dataset of sequence type + derived attributes built from workdir artifacts.
struct LearningData {
    Dataset data;
    double population = 0.0;
};
LearningData load_learning_data(const std::filesystem::path& workdir);

}  // namespace crashscen
