#include "crashscen/bayesnet.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "crashscen/error.hpp"
#include "crashscen/rng.hpp"

namespace crashscen {

using nlohmann::json;
using nlohmann::ordered_json;

std::size_t Variable::level_index(std::string_view level) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] == level) return i;
    throw LevelMismatch(name, std::string(level));
}

// -- Dataset ------------------------------------------------------------------

Dataset::Dataset(std::vector<Variable> variables) : variables_(std::move(variables)) {
    std::set<std::string> names;
    for (const auto& v : variables_) {
        if (v.levels.empty()) throw ConfigError("variable " + v.name + " has no levels");
        if (v.levels.size() > 65535) throw ConfigError("variable " + v.name + " has too many levels");
        if (!names.insert(v.name).second) throw ConfigError("duplicate variable " + v.name);
    }
}

void Dataset::add_record(std::span<const std::string> levels, double weight) {
    if (levels.size() != variables_.size()) throw DataError("record width does not match the variables");
    std::vector<std::uint16_t> idx(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i)
        idx[i] = static_cast<std::uint16_t>(variables_[i].level_index(levels[i]));
    add_record_indices(idx, weight);
}

void Dataset::add_record_indices(std::span<const std::uint16_t> levels, double weight) {
    if (levels.size() != variables_.size()) throw DataError("record width does not match the variables");
    if (!(weight > 0.0) || !std::isfinite(weight)) throw ConfigError("record weights must be positive");
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] >= variables_[i].levels.size())
            throw LevelMismatch(variables_[i].name, "#" + std::to_string(levels[i]));
    cells_.insert(cells_.end(), levels.begin(), levels.end());
    weights_.push_back(weight);
}

double Dataset::total_weight() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

std::optional<std::size_t> Dataset::find(std::string_view name) const {
    for (std::size_t i = 0; i < variables_.size(); ++i)
        if (variables_[i].name == name) return i;
    return std::nullopt;
}

std::size_t Dataset::index(std::string_view name) const {
    auto i = find(name);
    if (!i) throw ConfigError("unknown variable " + std::string(name));
    return *i;
}

Dataset Dataset::project(std::span<const std::string> names) const {
    std::vector<std::size_t> cols;
    std::vector<Variable> vars;
    for (const auto& n : names) {
        cols.push_back(index(n));
        vars.push_back(variables_[cols.back()]);
    }
    Dataset out(std::move(vars));
    std::vector<std::uint16_t> row(cols.size());
    for (std::size_t r = 0; r < size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) row[c] = at(r, cols[c]);
        out.add_record_indices(row, weights_[r]);
    }
    return out;
}

Dataset Dataset::rescaled(double factor) const {
    Dataset out = *this;
    for (double& w : out.weights_) w *= factor;
    return out;
}

// -- Dag ----------------------------------------------------------------------

bool Dag::has_arc(std::size_t parent, std::size_t child) const {
    const auto& p = parents_[child];
    return std::binary_search(p.begin(), p.end(), parent);
}

std::vector<std::pair<std::size_t, std::size_t>> Dag::arcs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t c = 0; c < parents_.size(); ++c)
        for (std::size_t p : parents_[c]) out.emplace_back(p, c);
    return out;
}

std::size_t Dag::num_arcs() const {
    std::size_t n = 0;
    for (const auto& p : parents_) n += p.size();
    return n;
}

bool Dag::reachable(std::size_t from, std::size_t to) const {
    // Walk parent links backwards from `to`.
    std::vector<char> seen(size(), 0);
    std::vector<std::size_t> stack{to};
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        if (v == from) return true;
        if (seen[v]) continue;
        seen[v] = 1;
        for (std::size_t p : parents_[v])
            if (!seen[p]) stack.push_back(p);
    }
    return false;
}

void Dag::add_arc(std::size_t parent, std::size_t child) {
    if (parent >= size() || child >= size()) throw ConfigError("arc endpoint out of range");
    if (parent == child) throw ConfigError("self-loop");
    if (has_arc(parent, child)) throw ConfigError("duplicate arc");
    if (reachable(child, parent)) throw ConfigError("arc would create a cycle");
    auto& p = parents_[child];
    p.insert(std::upper_bound(p.begin(), p.end(), parent), parent);
}

void Dag::remove_arc(std::size_t parent, std::size_t child) {
    auto& p = parents_[child];
    auto it = std::lower_bound(p.begin(), p.end(), parent);
    if (it == p.end() || *it != parent) throw ConfigError("arc not present");
    p.erase(it);
}

std::vector<std::size_t> Dag::topological_order() const {
    const std::size_t n = size();
    std::vector<std::size_t> indeg(n, 0), order;
    std::vector<std::vector<std::size_t>> children(n);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t p : parents_[c]) {
            children[p].push_back(c);
            ++indeg[c];
        }
    // Smallest ready index first keeps the order deterministic.
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.insert(i);
    while (!ready.empty()) {
        const std::size_t v = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(v);
        for (std::size_t c : children[v])
            if (--indeg[c] == 0) ready.insert(c);
    }
    return order;
}

bool Dag::is_acyclic() const { return topological_order().size() == size(); }

// -- scoring ------------------------------------------------------------------

FamilyScore family_score(const Dataset& data, std::size_t node, std::span<const std::size_t> parents,
                         const ScoreConfig& config) {
    const auto& vars = data.variables();
    const double r = static_cast<double>(vars[node].levels.size());
    double q = 1.0;
    for (std::size_t p : parents) q *= static_cast<double>(vars[p].levels.size());
    FamilyScore fs;
    fs.params = (r - 1.0) * q;

    const std::size_t n = data.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto same_config = [&](std::size_t a, std::size_t b) {
        for (std::size_t p : parents)
            if (data.at(a, p) != data.at(b, p)) return false;
        return true;
    };
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t p : parents) {
            const auto x = data.at(a, p), y = data.at(b, p);
            if (x != y) return x < y;
        }
        return data.at(a, node) < data.at(b, node);
    });

    const double alpha = config.alpha;
    std::vector<double> counts(vars[node].levels.size());
    for (std::size_t s = 0; s < n;) {
        std::size_t e = s;
        std::fill(counts.begin(), counts.end(), 0.0);
        while (e < n && same_config(idx[s], idx[e])) {
            counts[data.at(idx[e], node)] += data.weight(idx[e]);
            ++e;
        }
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        for (double c : counts)
            if (c > 0.0) fs.loglik += c * std::log((c + alpha) / (total + alpha * r));
        s = e;
    }
    return fs;
}

FitReport score(const Dag& dag, const Dataset& data, const ScoreConfig& config) {
    if (dag.size() != data.num_variables()) throw ConfigError("graph and data have different variables");
    FitReport rep;
    for (std::size_t v = 0; v < dag.size(); ++v) {
        const FamilyScore fs = family_score(data, v, dag.parents(v), config);
        rep.loglik += fs.loglik;
        rep.k += fs.params;
    }
    rep.aic = rep.loglik - config.penalty * rep.k;
    return rep;
}

// -- constraints --------------------------------------------------------------

ArcConstraints ArcConstraints::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("constraints file: ") + e.what());
    }
    ArcConstraints c;
    auto read = [&](const char* key, auto& out) {
        if (!j.contains(key)) return;
        for (const auto& a : j.at(key)) {
            if (!a.is_array() || a.size() != 2) throw ConfigError(std::string("constraints: ") + key + " entries must be [parent, child]");
            out.emplace_back(a[0].get<std::string>(), a[1].get<std::string>());
        }
    };
    try {
        read("forced", c.forced);
        read("forbidden", c.forbidden);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("constraints file: ") + e.what());
    }
    return c;
}

ArcConstraints ArcConstraints::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::pair<std::string, std::string> ArcConstraints::parse_arc(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size() ||
        text.find(':', colon + 1) != std::string_view::npos)
        throw ConfigError("arc must be written parent:child, got '" + std::string(text) + "'");
    return {std::string(text.substr(0, colon)), std::string(text.substr(colon + 1))};
}

// -- hill climbing ------------------------------------------------------------

namespace {

enum class OpKind { Add = 0, Delete = 1, Reverse = 2 };

struct Resolved {
    std::set<std::pair<std::size_t, std::size_t>> forced;
    std::set<std::pair<std::size_t, std::size_t>> forbidden;
    Dag start;
};

Resolved resolve(const Dataset& data, const ArcConstraints& c) {
    Resolved r;
    r.start = Dag(data.num_variables());
    auto idx = [&](const std::string& name) {
        auto i = data.find(name);
        if (!i) throw InfeasibleConstraints("unknown variable " + name);
        return *i;
    };
    for (const auto& [p, ch] : c.forbidden) r.forbidden.emplace(idx(p), idx(ch));
    for (const auto& [p, ch] : c.forced) {
        const auto a = std::make_pair(idx(p), idx(ch));
        if (a.first == a.second) throw InfeasibleConstraints("forced self-loop on " + p);
        if (r.forbidden.count(a)) throw InfeasibleConstraints("arc " + p + " -> " + ch + " is both forced and forbidden");
        if (!r.forced.insert(a).second) continue;
        if (r.start.reachable(a.second, a.first)) throw InfeasibleConstraints("forced arcs contain a cycle");
        r.start.add_arc(a.first, a.second);
    }
    return r;
}

class FamilyCache {
public:
    FamilyCache(const Dataset& data, const ScoreConfig& config) : data_(data), config_(config) {}
    double operator()(std::size_t node, std::vector<std::size_t> parents) {
        std::sort(parents.begin(), parents.end());
        auto key = std::make_pair(node, parents);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const double s = family_score(data_, node, parents, config_).score(config_);
        cache_.emplace(std::move(key), s);
        return s;
    }

private:
    const Dataset& data_;
    ScoreConfig config_;
    std::map<std::pair<std::size_t, std::vector<std::size_t>>, double> cache_;
};

std::vector<std::size_t> with(const std::vector<std::size_t>& v, std::size_t x) {
    auto out = v;
    out.insert(std::upper_bound(out.begin(), out.end(), x), x);
    return out;
}

std::vector<std::size_t> without(const std::vector<std::size_t>& v, std::size_t x) {
    auto out = v;
    out.erase(std::find(out.begin(), out.end(), x));
    return out;
}

struct Search {
    const Dataset& data;
    const ScoreConfig& config;
    const Resolved& res;
    const HillClimbOptions& options;
    FamilyCache& cache;

    std::size_t run(Dag& dag) const {
        const std::size_t n = dag.size();
        const auto& vars = data.variables();
        std::vector<double> node_score(n);
        for (std::size_t v = 0; v < n; ++v) node_score[v] = cache(v, dag.parents(v));
        std::size_t iterations = 0;
        for (; iterations < options.max_iterations; ++iterations) {
            const double total = std::accumulate(node_score.begin(), node_score.end(), 0.0);
            const double tol = 1e-10 * std::max(1.0, std::abs(total));
            bool found = false;
            double best = 0.0;
            std::tuple<int, std::string, std::string> best_key;
            OpKind best_kind = OpKind::Add;
            std::size_t best_p = 0, best_c = 0;

            auto consider = [&](OpKind kind, std::size_t p, std::size_t c, double delta) {
                auto key = std::make_tuple(static_cast<int>(kind), vars[p].name, vars[c].name);
                if (!found || delta > best + tol || (std::abs(delta - best) <= tol && key < best_key)) {
                    found = true;
                    best = delta;
                    best_key = std::move(key);
                    best_kind = kind;
                    best_p = p;
                    best_c = c;
                }
            };
            auto parent_room = [&](std::size_t node) {
                return options.max_parents == 0 || dag.parents(node).size() < options.max_parents;
            };

            for (std::size_t c = 0; c < n; ++c) {
                for (std::size_t p = 0; p < n; ++p) {
                    if (p == c) continue;
                    if (dag.has_arc(p, c)) {
                        if (res.forced.count({p, c})) continue;
                        const auto reduced = without(dag.parents(c), p);
                        const double del = cache(c, reduced) - node_score[c];
                        consider(OpKind::Delete, p, c, del);
                        if (res.forbidden.count({c, p}) || !parent_room(p)) continue;
                        Dag probe = dag;
                        probe.remove_arc(p, c);
                        if (probe.reachable(p, c)) continue;
                        consider(OpKind::Reverse, p, c, del + cache(p, with(dag.parents(p), c)) - node_score[p]);
                    } else if (!dag.has_arc(c, p)) {
                        if (res.forbidden.count({p, c}) || !parent_room(c) || dag.reachable(c, p)) continue;
                        consider(OpKind::Add, p, c, cache(c, with(dag.parents(c), p)) - node_score[c]);
                    }
                }
            }
            if (!found || !(best > tol)) break;
            switch (best_kind) {
                case OpKind::Add: dag.add_arc(best_p, best_c); break;
                case OpKind::Delete: dag.remove_arc(best_p, best_c); break;
                case OpKind::Reverse:
                    dag.remove_arc(best_p, best_c);
                    dag.add_arc(best_c, best_p);
                    break;
            }
            if (!dag.is_acyclic()) throw NumericError("structure search produced a cycle");
            node_score[best_c] = cache(best_c, dag.parents(best_c));
            node_score[best_p] = cache(best_p, dag.parents(best_p));
        }
        return iterations;
    }
};

Dag random_start(const Resolved& res, std::size_t n, Rng& rng, const HillClimbOptions& options) {
    Dag dag = res.start;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const double density = n > 1 ? 1.5 / static_cast<double>(n - 1) : 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::size_t p = perm[i], c = perm[j];
            if (rng.uniform() >= density) continue;
            if (dag.has_arc(p, c) || dag.has_arc(c, p) || res.forbidden.count({p, c})) continue;
            if (options.max_parents && dag.parents(c).size() >= options.max_parents) continue;
            if (dag.reachable(c, p)) continue;
            dag.add_arc(p, c);
        }
    return dag;
}

}  // namespace

LearnResult hill_climb(const Dataset& data, const ScoreConfig& config, const ArcConstraints& constraints,
                       const HillClimbOptions& options) {
    if (data.size() == 0) throw DataError("cannot learn a network from an empty dataset");
    const Resolved res = resolve(data, constraints);
    FamilyCache cache(data, config);
    Search search{data, config, res, options, cache};

    LearnResult best;
    best.dag = res.start;
    best.iterations = search.run(best.dag);
    best.fit = score(best.dag, data, config);

    Rng rng(derive_seed(options.seed, 0xb7));
    for (std::size_t r = 0; r < options.restarts; ++r) {
        Dag dag = random_start(res, data.num_variables(), rng, options);
        const std::size_t it = search.run(dag);
        const FitReport fit = score(dag, data, config);
        if (fit.aic > best.fit.aic + 1e-10 * std::max(1.0, std::abs(best.fit.aic))) {
            best.dag = std::move(dag);
            best.fit = fit;
            best.iterations = it;
        }
    }
    return best;
}

double arc_strength(const Dag& dag, const Dataset& data, std::size_t parent, std::size_t child,
                    const ScoreConfig& config) {
    if (parent >= dag.size() || child >= dag.size() || !dag.has_arc(parent, child)) {
        const auto name = [&](std::size_t i) {
            return i < data.num_variables() ? data.variables()[i].name : "#" + std::to_string(i);
        };
        throw ArcNotInGraph(name(parent), name(child));
    }
    const auto& ps = dag.parents(child);
    return family_score(data, child, without(ps, parent), config).score(config) -
           family_score(data, child, ps, config).score(config);
}

std::vector<ArcStrength> arc_strength(const Dag& dag, const Dataset& data, const ScoreConfig& config) {
    std::vector<ArcStrength> out;
    for (const auto& [p, c] : dag.arcs())
        out.push_back({data.variables()[p].name, data.variables()[c].name, arc_strength(dag, data, p, c, config)});
    return out;
}

// -- parameters ---------------------------------------------------------------

BayesNet::BayesNet(std::vector<Variable> variables, Dag dag, std::vector<Cpt> cpts)
    : variables_(std::move(variables)), dag_(std::move(dag)), cpts_(std::move(cpts)) {
    if (dag_.size() != variables_.size() || cpts_.size() != variables_.size())
        throw ConfigError("network nodes, graph and tables differ in size");
    order_ = dag_.topological_order();
    if (order_.size() != variables_.size()) throw ConfigError("network graph has a cycle");
    for (std::size_t v = 0; v < cpts_.size(); ++v) {
        const Cpt& t = cpts_[v];
        std::size_t rows = 1;
        for (std::size_t p : dag_.parents(v)) rows *= variables_[p].levels.size();
        if (t.node != v || t.parents != dag_.parents(v) || t.levels != variables_[v].levels.size() ||
            t.probs.size() != rows * t.levels)
            throw ConfigError("table for " + variables_[v].name + " does not match the graph");
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (double x : t.row(r)) {
                if (!(x >= 0.0)) throw ConfigError("negative probability in table for " + variables_[v].name);
                s += x;
            }
            if (std::abs(s - 1.0) > 1e-9) throw ConfigError("table row for " + variables_[v].name + " does not sum to 1");
        }
    }
}

std::optional<std::size_t> BayesNet::find(std::string_view name) const {
    for (std::size_t i = 0; i < variables_.size(); ++i)
        if (variables_[i].name == name) return i;
    return std::nullopt;
}

std::size_t BayesNet::index(std::string_view name) const {
    auto i = find(name);
    if (!i) throw ConfigError("unknown network node " + std::string(name));
    return *i;
}

std::size_t BayesNet::row_index(std::size_t node, std::span<const std::uint16_t> assignment) const {
    std::size_t row = 0;
    for (std::size_t p : cpts_[node].parents) row = row * variables_[p].levels.size() + assignment[p];
    return row;
}

double BayesNet::conditional(std::size_t node, std::span<const std::uint16_t> assignment) const {
    const Cpt& t = cpts_[node];
    return t.probs[row_index(node, assignment) * t.levels + assignment[node]];
}

double BayesNet::joint_probability(std::span<const std::uint16_t> assignment) const {
    if (assignment.size() != size()) throw DataError("assignment must cover every node");
    double p = 1.0;
    for (std::size_t v = 0; v < size(); ++v) p *= conditional(v, assignment);
    return p;
}

double BayesNet::joint_probability(const std::map<std::string, std::string>& assignment) const {
    std::vector<std::uint16_t> a(size());
    for (std::size_t v = 0; v < size(); ++v) {
        auto it = assignment.find(variables_[v].name);
        if (it == assignment.end()) throw IncompleteAssignment(variables_[v].name);
        a[v] = static_cast<std::uint16_t>(variables_[v].level_index(it->second));
    }
    return joint_probability(a);
}

BayesNet fit_parameters(const Dag& dag, const Dataset& data, double alpha) {
    if (dag.size() != data.num_variables()) throw ConfigError("graph and data have different variables");
    if (!(alpha >= 0.0)) throw ConfigError("smoothing must be non-negative");
    const auto& vars = data.variables();
    std::vector<Cpt> cpts;
    for (std::size_t v = 0; v < dag.size(); ++v) {
        Cpt t;
        t.node = v;
        t.parents = dag.parents(v);
        t.levels = vars[v].levels.size();
        std::size_t rows = 1;
        for (std::size_t p : t.parents) rows *= vars[p].levels.size();
        std::vector<double> counts(rows * t.levels, 0.0);
        for (std::size_t r = 0; r < data.size(); ++r) {
            std::size_t row = 0;
            for (std::size_t p : t.parents) row = row * vars[p].levels.size() + data.at(r, p);
            counts[row * t.levels + data.at(r, v)] += data.weight(r);
        }
        t.probs.assign(counts.size(), 0.0);
        for (std::size_t row = 0; row < rows; ++row) {
            double total = 0.0;
            for (std::size_t l = 0; l < t.levels; ++l) total += counts[row * t.levels + l];
            const double denom = total + alpha * static_cast<double>(t.levels);
            if (denom <= 0.0) {
                t.uniform_rows.push_back(row);
                for (std::size_t l = 0; l < t.levels; ++l) t.probs[row * t.levels + l] = 1.0 / static_cast<double>(t.levels);
                continue;
            }
            for (std::size_t l = 0; l < t.levels; ++l)
                t.probs[row * t.levels + l] = (counts[row * t.levels + l] + alpha) / denom;
        }
        cpts.push_back(std::move(t));
    }
    return BayesNet(vars, dag, std::move(cpts));
}

double log_likelihood(const BayesNet& net, const Dataset& data) {
    if (net.size() != data.num_variables()) throw ConfigError("network and data have different variables");
    double ll = 0.0;
    std::vector<std::uint16_t> rec(net.size());
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (std::size_t v = 0; v < net.size(); ++v) rec[v] = data.at(r, v);
        const double p = net.joint_probability(rec);
        if (!(p > 0.0)) throw ZeroProbabilityRecord(r);
        ll += data.weight(r) * std::log(p);
    }
    return ll;
}

// -- persistence --------------------------------------------------------------

std::string network_to_json(const BayesNet& net) {
    ordered_json j;
    const auto& vars = net.variables();
    j["nodes"] = ordered_json::array();
    for (const auto& v : vars) j["nodes"].push_back({{"name", v.name}, {"levels", v.levels}});
    j["arcs"] = ordered_json::array();
    for (const auto& [p, c] : net.dag().arcs()) j["arcs"].push_back({vars[p].name, vars[c].name});
    j["cpts"] = ordered_json::object();
    for (const auto& t : net.cpts()) {
        ordered_json node;
        node["parents"] = ordered_json::array();
        for (std::size_t p : t.parents) node["parents"].push_back(vars[p].name);
        node["rows"] = ordered_json::array();
        for (std::size_t r = 0; r < t.rows(); ++r) {
            ordered_json config = ordered_json::array();
            std::size_t rem = r;
            std::vector<std::string> levels(t.parents.size());
            for (std::size_t i = t.parents.size(); i-- > 0;) {
                const auto& pl = vars[t.parents[i]].levels;
                levels[i] = pl[rem % pl.size()];
                rem /= pl.size();
            }
            for (auto& l : levels) config.push_back(std::move(l));
            const auto row = t.row(r);
            node["rows"].push_back({config, std::vector<double>(row.begin(), row.end())});
        }
        j["cpts"][vars[t.node].name] = std::move(node);
    }
    if (net.fit) j["fit"] = {{"loglik", net.fit->loglik}, {"k", net.fit->k}, {"aic", net.fit->aic}};
    return j.dump(1) + "\n";
}

BayesNet network_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        std::vector<Variable> vars;
        for (const auto& n : j.at("nodes"))
            vars.push_back({n.at("name").get<std::string>(), n.at("levels").get<std::vector<std::string>>()});
        auto idx = [&](const std::string& name) {
            for (std::size_t i = 0; i < vars.size(); ++i)
                if (vars[i].name == name) return i;
            throw DataError("network file: unknown node " + name);
        };
        Dag dag(vars.size());
        for (const auto& a : j.at("arcs")) dag.add_arc(idx(a.at(0).get<std::string>()), idx(a.at(1).get<std::string>()));
        std::vector<Cpt> cpts(vars.size());
        for (std::size_t v = 0; v < vars.size(); ++v) {
            const auto& node = j.at("cpts").at(vars[v].name);
            Cpt& t = cpts[v];
            t.node = v;
            for (const auto& p : node.at("parents")) t.parents.push_back(idx(p.get<std::string>()));
            if (t.parents != dag.parents(v)) throw DataError("network file: parents of " + vars[v].name + " do not match the arcs");
            t.levels = vars[v].levels.size();
            std::size_t rows = 1;
            for (std::size_t p : t.parents) rows *= vars[p].levels.size();
            t.probs.assign(rows * t.levels, 0.0);
            std::vector<char> seen(rows, 0);
            for (const auto& row : node.at("rows")) {
                const auto config = row.at(0).get<std::vector<std::string>>();
                const auto probs = row.at(1).get<std::vector<double>>();
                if (config.size() != t.parents.size() || probs.size() != t.levels)
                    throw DataError("network file: malformed row for " + vars[v].name);
                std::size_t r = 0;
                for (std::size_t i = 0; i < config.size(); ++i)
                    r = r * vars[t.parents[i]].levels.size() + vars[t.parents[i]].level_index(config[i]);
                std::copy(probs.begin(), probs.end(), t.probs.begin() + static_cast<std::ptrdiff_t>(r * t.levels));
                seen[r] = 1;
            }
            if (std::find(seen.begin(), seen.end(), 0) != seen.end())
                throw DataError("network file: missing rows for " + vars[v].name);
        }
        BayesNet net(std::move(vars), std::move(dag), std::move(cpts));
        if (j.contains("fit"))
            net.fit = FitReport{j["fit"].at("loglik").get<double>(), j["fit"].at("k").get<double>(),
                                j["fit"].at("aic").get<double>()};
        return net;
    } catch (const json::exception& e) {
        throw DataError(std::string("network file: ") + e.what());
    }
}

std::string network_to_dot(const BayesNet& net, const std::vector<ArcStrength>& strengths, double weak_threshold) {
    std::ostringstream out;
    out << "digraph bn {\n  node [shape=ellipse];\n";
    for (const auto& v : net.variables()) out << "  \"" << v.name << "\";\n";
    const auto& vars = net.variables();
    for (const auto& [p, c] : net.dag().arcs()) {
        out << "  \"" << vars[p].name << "\" -> \"" << vars[c].name << "\"";
        auto it = std::find_if(strengths.begin(), strengths.end(), [&](const ArcStrength& s) {
            return s.parent == vars[p].name && s.child == vars[c].name;
        });
        if (it != strengths.end()) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.1f", it->strength);
            out << " [label=\"" << buf << "\"";
            if (it->strength > weak_threshold) out << ", style=dashed";
            out << "]";
        }
        out << ";\n";
    }
    out << "}\n";
    return out.str();
}

// -- stability ----------------------------------------------------------------

std::vector<StabilityEntry> stability_report(const Dataset& data, const Dag& full,
                                             const std::vector<std::vector<std::string>>& subsets,
                                             const ScoreConfig& config, const ArcConstraints& constraints,
                                             const HillClimbOptions& options) {
    std::vector<StabilityEntry> out;
    const auto& vars = data.variables();
    for (const auto& subset : subsets) {
        std::set<std::string> members(subset.begin(), subset.end());
        ArcConstraints local;
        for (const auto& a : constraints.forced)
            if (members.count(a.first) && members.count(a.second)) local.forced.push_back(a);
        for (const auto& a : constraints.forbidden)
            if (members.count(a.first) && members.count(a.second)) local.forbidden.push_back(a);
        const Dataset part = data.project(subset);
        const LearnResult lr = hill_climb(part, config, local, options);

        std::set<std::pair<std::string, std::string>> before, after;
        for (const auto& [p, c] : full.arcs())
            if (members.count(vars[p].name) && members.count(vars[c].name)) before.emplace(vars[p].name, vars[c].name);
        for (const auto& [p, c] : lr.dag.arcs())
            after.emplace(part.variables()[p].name, part.variables()[c].name);
        StabilityEntry e;
        e.variables = subset;
        std::set_difference(after.begin(), after.end(), before.begin(), before.end(), std::back_inserter(e.added));
        std::set_difference(before.begin(), before.end(), after.begin(), after.end(), std::back_inserter(e.removed));
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace crashscen
