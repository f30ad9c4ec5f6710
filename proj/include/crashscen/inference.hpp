#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "crashscen/bayesnet.hpp"

namespace crashscen {

/// n full assignments drawn ancestrally; row-major, one level index per node.
std::vector<std::uint16_t> sample_forward(const BayesNet& net, std::size_t n, std::uint64_t seed);

struct Query {
    std::string name;
    std::map<std::string, std::string> evidence;
    /// One or two target nodes.
    std::vector<std::string> targets;
    std::size_t replications = 1000;
    std::size_t samples = 10000;
    /// Population the counts are expressed in (e.g. total weighted crashes).
    double scale = 1.0;
    std::uint64_t seed = 0;
};

struct QueryCell {
    /// One level per target.
    std::vector<std::string> levels;
    /// Mean and sd over replications of P(cell | evidence) · P(evidence) · scale.
    double joint_mean = 0.0;
    double joint_sd = 0.0;
    /// Mean and sd over replications of P(cell | evidence) · scale.
    double conditional_mean = 0.0;
    double conditional_sd = 0.0;
    /// Mean estimated P(cell | evidence).
    double probability = 0.0;
};

struct QueryResult {
    Query query;
    /// Levels of each target, in network order.
    std::vector<std::vector<std::string>> target_levels;
    /// Row-major over target_levels (last target fastest).
    std::vector<QueryCell> cells;
    double evidence_probability = 0.0;
    /// Mean effective sample size (Σw)² / Σw² per replication.
    double mean_ess = 0.0;
    std::size_t replications_used = 0;
    std::size_t replications_dropped = 0;
};

/// Likelihood weighting: non-evidence nodes are sampled in topological order
/// and each particle is weighted by the probability of the evidence given its
/// parents. Replication r uses seed derive_seed(q.seed, r). Throws
/// ConfigError for invalid queries, LevelMismatch for unknown levels and
/// ZeroEvidenceProbability when no replication has positive weight.
QueryResult query(const BayesNet& net, const Query& q, unsigned threads = 0);

/// JSON list of {name?, evidence:{var:level}, targets:[...], R?, N?, scale?, seed?}.
std::vector<Query> queries_from_json(std::string_view text, const Query& defaults = {});

// -- reporting ----------------------------------------------------------------

/// Single target: level rows. Two targets: cross-tab of joint mean counts.
std::string query_to_csv(const QueryResult& r);
/// Long format with all statistics, one row per cell.
std::string query_to_long_csv(const QueryResult& r);
std::string query_to_json(const QueryResult& r);
QueryResult query_result_from_json(std::string_view text);
/// Bar chart of joint mean counts for single-target queries.
std::string query_to_svg(const QueryResult& r);
/// Prose line for the most frequent cells.
std::vector<std::string> scenario_lines(const QueryResult& r, std::size_t top = 3);
/// Markdown document with one section per query.
std::string scenario_report(const std::vector<QueryResult>& results);

}  // namespace crashscen
