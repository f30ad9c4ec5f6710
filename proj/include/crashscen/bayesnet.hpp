#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crashscen {

struct Variable {
    std::string name;
    std::vector<std::string> levels;

    /// Throws LevelMismatch.
    std::size_t level_index(std::string_view level) const;
};

/// Weighted categorical records stored row-major as level indices.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<Variable> variables);

    /// Throws LevelMismatch for undeclared levels, ConfigError for non-positive weights.
    void add_record(std::span<const std::string> levels, double weight = 1.0);
    void add_record_indices(std::span<const std::uint16_t> levels, double weight = 1.0);

    const std::vector<Variable>& variables() const { return variables_; }
    std::size_t num_variables() const { return variables_.size(); }
    std::size_t size() const { return weights_.size(); }
    std::uint16_t at(std::size_t record, std::size_t variable) const { return cells_[record * variables_.size() + variable]; }
    double weight(std::size_t record) const { return weights_[record]; }
    const std::vector<double>& weights() const { return weights_; }
    double total_weight() const;

    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws ConfigError for unknown names.
    std::size_t index(std::string_view name) const;
    /// Columns restricted to `names`, in the given order.
    Dataset project(std::span<const std::string> names) const;
    /// Same records with every weight multiplied by `factor`.
    Dataset rescaled(double factor) const;

private:
    std::vector<Variable> variables_;
    std::vector<std::uint16_t> cells_;
    std::vector<double> weights_;
};

/// Directed acyclic graph over variable indices.
class Dag {
public:
    Dag() = default;
    explicit Dag(std::size_t nodes) : parents_(nodes) {}

    std::size_t size() const { return parents_.size(); }
    /// Parent indices in ascending order.
    const std::vector<std::size_t>& parents(std::size_t node) const { return parents_[node]; }
    bool has_arc(std::size_t parent, std::size_t child) const;
    /// All arcs ordered by (child, parent).
    std::vector<std::pair<std::size_t, std::size_t>> arcs() const;
    std::size_t num_arcs() const;

    /// True when a directed path leads from `from` to `to`.
    bool reachable(std::size_t from, std::size_t to) const;
    /// Throws ConfigError on self-loops, duplicates or cycles.
    void add_arc(std::size_t parent, std::size_t child);
    void remove_arc(std::size_t parent, std::size_t child);
    bool is_acyclic() const;
    std::vector<std::size_t> topological_order() const;

    friend bool operator==(const Dag&, const Dag&) = default;

private:
    std::vector<std::vector<std::size_t>> parents_;
};

struct ScoreConfig {
    /// Penalty per free parameter; 2 gives ln L − 2k.
    double penalty = 2.0;
    /// Pseudo-count per CPT cell while scoring (0 = maximum likelihood).
    double alpha = 0.0;
};

struct FitReport {
    double loglik = 0.0;
    double k = 0.0;
    double aic = 0.0;
};

/// Log-likelihood and parameter count of one node given a parent set.
struct FamilyScore {
    double loglik = 0.0;
    double params = 0.0;
    double score(const ScoreConfig& c) const { return loglik - c.penalty * params; }
};
FamilyScore family_score(const Dataset& data, std::size_t node, std::span<const std::size_t> parents,
                         const ScoreConfig& config = {});

/// Throws LevelMismatch when dag and data differ in size.
FitReport score(const Dag& dag, const Dataset& data, const ScoreConfig& config = {});

struct ArcConstraints {
    std::vector<std::pair<std::string, std::string>> forced;
    std::vector<std::pair<std::string, std::string>> forbidden;

    /// JSON {forced:[[p,c],...], forbidden:[[p,c],...]}.
    static ArcConstraints from_json(std::string_view text);
    static ArcConstraints load(const std::filesystem::path& path);
    /// Parses "parent:child".
    static std::pair<std::string, std::string> parse_arc(std::string_view text);
};

struct HillClimbOptions {
    /// Additional searches from seeded random DAGs; best score wins.
    std::size_t restarts = 0;
    std::uint64_t seed = 0;
    std::size_t max_iterations = 100000;
    /// 0 = unlimited.
    std::size_t max_parents = 0;
};

struct LearnResult {
    Dag dag;
    FitReport fit;
    std::size_t iterations = 0;
};

/// Greedy add / delete / reverse search from the forced-arc graph. Forced arcs
/// are never removed or reversed and forbidden arcs never added. Throws
/// InfeasibleConstraints.
LearnResult hill_climb(const Dataset& data, const ScoreConfig& config = {}, const ArcConstraints& constraints = {},
                       const HillClimbOptions& options = {});

struct ArcStrength {
    std::string parent;
    std::string child;
    /// score(dag − arc) − score(dag); negative means the arc carries information.
    double strength = 0.0;
};
std::vector<ArcStrength> arc_strength(const Dag& dag, const Dataset& data, const ScoreConfig& config = {});
/// Throws ArcNotInGraph.
double arc_strength(const Dag& dag, const Dataset& data, std::size_t parent, std::size_t child,
                    const ScoreConfig& config = {});

struct Cpt {
    std::size_t node = 0;
    std::vector<std::size_t> parents;
    std::size_t levels = 0;
    /// rows × levels, row index in mixed radix over `parents` (last parent fastest).
    std::vector<double> probs;
    /// Rows that had no data and no smoothing and were set uniform.
    std::vector<std::size_t> uniform_rows;

    std::size_t rows() const { return levels ? probs.size() / levels : 0; }
    std::span<const double> row(std::size_t r) const { return {probs.data() + r * levels, levels}; }
};

class BayesNet {
public:
    BayesNet() = default;
    BayesNet(std::vector<Variable> variables, Dag dag, std::vector<Cpt> cpts);

    const std::vector<Variable>& variables() const { return variables_; }
    const Dag& dag() const { return dag_; }
    const std::vector<Cpt>& cpts() const { return cpts_; }
    std::size_t size() const { return variables_.size(); }
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index(std::string_view name) const;
    const std::vector<std::size_t>& order() const { return order_; }

    /// CPT row of `node` under a full or partial assignment covering its parents.
    std::size_t row_index(std::size_t node, std::span<const std::uint16_t> assignment) const;
    double conditional(std::size_t node, std::span<const std::uint16_t> assignment) const;

    /// Product of CPT entries; assignment holds one level index per node.
    double joint_probability(std::span<const std::uint16_t> assignment) const;
    /// Throws IncompleteAssignment / LevelMismatch.
    double joint_probability(const std::map<std::string, std::string>& assignment) const;

    std::optional<FitReport> fit;

private:
    std::vector<Variable> variables_;
    Dag dag_;
    std::vector<Cpt> cpts_;
    std::vector<std::size_t> order_;
};

/// CPT rows = (weighted count + α) / (weighted total + α · levels).
BayesNet fit_parameters(const Dag& dag, const Dataset& data, double alpha = 1e-3);

/// Σ weight · ln P(record); throws ZeroProbabilityRecord.
double log_likelihood(const BayesNet& net, const Dataset& data);

// -- persistence --------------------------------------------------------------

std::string network_to_json(const BayesNet& net);
BayesNet network_from_json(std::string_view text);

/// DOT text; arcs are labelled with their strength and drawn dashed when the
/// strength exceeds `weak_threshold`.
std::string network_to_dot(const BayesNet& net, const std::vector<ArcStrength>& strengths,
                           double weak_threshold = 0.0);

// -- structural stability -----------------------------------------------------

struct StabilityEntry {
    std::vector<std::string> variables;
    /// Arcs of the re-learned network missing from the full network (restricted to the subset).
    std::vector<std::pair<std::string, std::string>> added;
    /// Arcs of the full network among the subset absent from the re-learned one.
    std::vector<std::pair<std::string, std::string>> removed;
};

/// Re-learns the network on each variable subset and diffs the arc sets.
std::vector<StabilityEntry> stability_report(const Dataset& data, const Dag& full,
                                             const std::vector<std::vector<std::string>>& subsets,
                                             const ScoreConfig& config = {}, const ArcConstraints& constraints = {},
                                             const HillClimbOptions& options = {});

}  // namespace crashscen
