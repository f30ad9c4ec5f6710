#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crashscen/event_codec.hpp"
#include "crashscen/seqdist.hpp"

namespace crashscen {

struct Partition {
    std::size_t k = 0;
    /// Medoid observation indices, in cluster order.
    std::vector<std::size_t> medoids;
    std::vector<std::string> medoid_ids;
    /// Cluster index per observation.
    std::vector<std::size_t> assignment;
    /// Σ weight · distance to own medoid.
    double total_cost = 0.0;
};

struct KMedoidsOptions {
    /// Extra starts from random medoid sets; the best local optimum wins.
    std::size_t restarts = 0;
    /// When C(n, k) is at most this many subsets the search enumerates them
    /// all and returns the global optimum. 0 disables enumeration.
    std::size_t exhaustive_limit = 5000;
};

/// Weighted PAM: greedy BUILD, then best-improvement SWAP until no swap
/// strictly lowers total_cost. Ties go to the lowest index. Throws KTooLarge
/// and ConfigError for k = 0 or non-positive weights.
Partition k_medoids(const DissimMatrix& d, std::span<const double> weights, std::size_t k, std::uint64_t seed = 0,
                    const KMedoidsOptions& options = {});

/// Nearest medoid for every observation (lowest cluster index on ties).
std::vector<std::size_t> assign_to_medoids(const DissimMatrix& d, std::span<const std::size_t> medoids);

/// Weighted cost of a medoid set.
double medoid_cost(const DissimMatrix& d, std::span<const double> weights, std::span<const std::size_t> medoids);

struct QualityIndices {
    double asw_w = 0.0;
    double hg = 0.0;
    double pbc = 0.0;
    double hc = 0.0;
};

/// Weighted silhouette, Hubert's gamma, point-biserial correlation and
/// Hubert's C for a partition (pair weights w_i·w_j).
QualityIndices quality_indices(const DissimMatrix& d, std::span<const double> weights,
                               std::span<const std::size_t> assignment);

struct QualityRow {
    std::size_t k = 0;
    QualityIndices raw;
    /// Each index z-standardised across the sweep (population sd).
    QualityIndices z;
    Partition partition;
};

struct QualityReport {
    std::vector<QualityRow> rows;
    /// Set when some index has zero spread across the sweep; its z-values are 0.
    bool degenerate = false;
};

/// Runs k_medoids for k_min..k_max (clamped to n) and z-standardises each index.
QualityReport k_sweep(const DissimMatrix& d, std::span<const double> weights, std::size_t k_min, std::size_t k_max,
                      std::uint64_t seed = 0, unsigned threads = 1);

/// Extension: k maximising mean(z_asw + z_hg + z_pbc − z_hc) over the sweep.
std::size_t choose_k(const QualityReport& report);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

// -- per-configuration clustering --------------------------------------------

/// Distinct sequences of one configuration with aggregated crash weights.
struct SequenceGroup {
    CrashConfig config;
    std::vector<std::string> sequences;  // rendered, first-appearance order
    std::vector<std::vector<EventToken>> tokens;
    std::vector<double> weights;
    std::vector<std::size_t> counts;
};

/// Groups by crash_config (sequences without one are skipped) and collapses
/// identical token lists.
std::map<CrashConfig, SequenceGroup> group_sequences(std::span<const CrashSequence> seqs);

struct ConfigTypes {
    CrashConfig config;
    Partition partition;
    /// Type label per cluster: lower-case config letter + 1-based index.
    std::vector<std::string> labels;
    std::vector<double> cluster_weight;
    std::vector<std::size_t> cluster_count;
    double total_weight = 0.0;
    /// Set when the group had fewer distinct sequences than k_min and became one type.
    bool too_small = false;
};

/// Clusters one group with `k` types; clusters are relabelled so that label
/// order follows the medoids' first appearance in the group.
ConfigTypes cluster_group(const SequenceGroup& group, const DissimMatrix& d, std::size_t k, std::size_t k_min = 2,
                          std::uint64_t seed = 0);

/// Convenience: matrix + cluster_group for every configuration.
std::map<CrashConfig, ConfigTypes> cluster_by_config(std::span<const CrashSequence> seqs,
                                                     const std::map<CrashConfig, std::size_t>& k_per_config,
                                                     const CostScheme& costs = {}, std::size_t default_k = 2,
                                                     std::uint64_t seed = 0, unsigned threads = 0);

/// Default number of types per configuration used by the pipeline.
const std::map<CrashConfig, std::size_t>& default_types_per_config();

}  // namespace crashscen
