#include "crashscen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "crashscen/cluster.hpp"
#include "crashscen/csv.hpp"
#include "crashscen/embedded_data.hpp"
#include "crashscen/error.hpp"
#include "crashscen/inference.hpp"
#include "crashscen/ingest.hpp"
#include "crashscen/rng.hpp"

namespace crashscen {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// -- configuration ------------------------------------------------------------

namespace {

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
    auto x = parse_int(v);
    if (!x || *x < 0) throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
    return static_cast<std::uint64_t>(*x);
}

double parse_real(std::string_view key, std::string_view v) {
    auto x = parse_double(v);
    if (!x || !std::isfinite(*x)) throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
    return *x;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(std::string(key) + ": expected true or false");
}

void parse_k_entry(std::map<CrashConfig, std::size_t>& out, std::string_view entry) {
    const auto eq = entry.find_first_of("=:");
    const std::string cfg = trim(entry.substr(0, eq));
    if (eq == std::string_view::npos || cfg.size() != 1) throw ConfigError("k: expected CONFIG=K, got '" + std::string(entry) + "'");
    auto c = config_from_char(static_cast<char>(std::toupper(static_cast<unsigned char>(cfg[0]))));
    if (!c) throw ConfigError("k: unknown crash configuration '" + cfg + "'");
    const auto k = parse_u64("k", trim(entry.substr(eq + 1)));
    if (k == 0) throw ConfigError("k must be at least 1");
    out[*c] = k;
}

}  // namespace

void PipelineConfig::set(std::string_view key_in, std::string_view value_in) {
    const std::string key = trim(key_in);
    const std::string value = trim(value_in);
    if (key == "workdir") workdir = value;
    else if (key == "accident") accident = value;
    else if (key == "vehicle") vehicle = value;
    else if (key == "event") event = value;
    else if (key == "synth_crashes" || key == "n_crashes") {
        synth_crashes = parse_u64(key, value);
        if (synth_crashes == 0) throw ConfigError("synth_crashes must be positive");
    } else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "indel") costs.indel = parse_real(key, value);
    else if (key == "substitution") costs.substitution = parse_real(key, value);
    else if (key == "matrix_format") {
        if (value == "binary" || value == "bin") binary_matrix = true;
        else if (value == "csv") binary_matrix = false;
        else throw ConfigError("matrix_format must be binary or csv");
    } else if (key == "k_range") {
        const auto dots = value.find("..");
        if (dots == std::string::npos) throw ConfigError("k_range must look like 2..25");
        k_min = parse_u64(key, value.substr(0, dots));
        k_max = parse_u64(key, value.substr(dots + 2));
        if (k_min < 2 || k_max < k_min) throw ConfigError("k_range must satisfy 2 <= min <= max");
    } else if (key == "k") {
        for (const auto& part : split(value, ','))
            if (!trim(part).empty()) parse_k_entry(k, part);
    } else if (key.rfind("k.", 0) == 0) {
        parse_k_entry(k, key.substr(2) + "=" + value);
    } else if (key == "k_auto") k_auto = parse_bool(key, value);
    else if (key == "penalty") {
        score.penalty = parse_real(key, value);
        if (score.penalty < 0) throw ConfigError("penalty must be non-negative");
    } else if (key == "alpha") {
        alpha = parse_real(key, value);
        if (alpha < 0) throw ConfigError("alpha must be non-negative");
    } else if (key == "score_alpha") {
        score.alpha = parse_real(key, value);
        if (score.alpha < 0) throw ConfigError("score_alpha must be non-negative");
    } else if (key == "restarts") restarts = parse_u64(key, value);
    else if (key == "constraints") constraints = value;
    else if (key == "forbid") {
        for (const auto& part : split(value, ','))
            if (!trim(part).empty()) forbid.push_back(ArcConstraints::parse_arc(trim(part)));
    } else if (key == "force") {
        for (const auto& part : split(value, ','))
            if (!trim(part).empty()) force.push_back(ArcConstraints::parse_arc(trim(part)));
    } else if (key == "weak_threshold") weak_threshold = parse_real(key, value);
    else if (key == "queries") queries = value;
    else if (key == "replications" || key == "R") {
        replications = parse_u64(key, value);
        if (replications == 0) throw ConfigError("replications must be positive");
    } else if (key == "samples" || key == "N") {
        samples = parse_u64(key, value);
        if (samples == 0) throw ConfigError("samples must be positive");
    } else if (key == "scale") {
        scale = parse_real(key, value);
        if (!(*scale > 0)) throw ConfigError("scale must be positive");
    } else if (key == "threads") threads = static_cast<unsigned>(parse_u64(key, value));
    else throw ConfigError("unknown configuration key '" + key + "'");
}

void PipelineConfig::apply_text(std::string_view text, const std::string& source) {
    std::size_t lineno = 0;
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        try {
            set(std::string_view(line).substr(0, eq), value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void PipelineConfig::apply_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_text(ss.str(), path.string());
}

fs::path PipelineConfig::raw_accident() const { return accident.empty() ? workdir / "raw" / "accident.csv" : accident; }
fs::path PipelineConfig::raw_vehicle() const { return vehicle.empty() ? workdir / "raw" / "vehicle.csv" : vehicle; }
fs::path PipelineConfig::raw_event() const { return event.empty() ? workdir / "raw" / "event.csv" : event; }

// -- artifact plumbing --------------------------------------------------------

namespace {

/// Collects a stage's outputs under `.partial` names and renames them on commit.
class Artifacts {
public:
    Artifacts(fs::path workdir, StageSummary& summary) : workdir_(std::move(workdir)), summary_(summary) {}

    void write(const std::string& rel, std::string_view content) {
        const fs::path target = workdir_ / rel;
        fs::create_directories(target.parent_path());
        const fs::path partial = target.string() + ".partial";
        std::ofstream out(partial, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + partial.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw ConfigError("failed writing " + partial.string());
        pending_.push_back(rel);
    }

    void write_matrix(const std::string& rel, const DissimMatrix& m, bool binary) {
        std::ostringstream out(std::ios::binary);
        if (binary)
            m.write_binary(out);
        else
            m.write_csv(out);
        write(rel, out.str());
    }

    void commit() {
        for (const auto& rel : pending_) {
            const fs::path target = workdir_ / rel;
            fs::rename(target.string() + ".partial", target);
            summary_.artifacts.push_back(rel);
        }
        pending_.clear();
    }

private:
    fs::path workdir_;
    StageSummary& summary_;
    std::vector<std::string> pending_;
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing input " + path.string() + " (run the earlier stage first)");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void log(const std::string& stage, const std::string& msg) { std::cerr << "[" << stage << "] " << msg << '\n'; }

std::string num(double v) { return format_double(v); }

std::string dump(const ordered_json& j) { return j.dump(1) + "\n"; }

std::vector<CrashSequence> load_sequences(const fs::path& workdir) {
    std::istringstream in(read_text(workdir / "sequences.jsonl"));
    return read_sequences_jsonl(in);
}

std::string matrix_name(CrashConfig c, bool binary) {
    return std::string("distmat/dist_") + to_char(c) + (binary ? ".bin" : ".csv");
}

DissimMatrix load_group_matrix(const fs::path& workdir, const SequenceGroup& g) {
    fs::path p = workdir / matrix_name(g.config, true);
    if (!fs::exists(p)) p = workdir / matrix_name(g.config, false);
    if (!fs::exists(p)) throw DataError("missing distance matrix for configuration " + std::string(1, to_char(g.config)));
    DissimMatrix m = DissimMatrix::load(p);
    if (m.ids() != g.sequences)
        throw DataError("distance matrix for configuration " + std::string(1, to_char(g.config)) +
                        " does not match sequences.jsonl (rerun distmat)");
    return m;
}

// -- stages -------------------------------------------------------------------

void stage_synth(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const RawTables raw = generate_synthetic(cfg.seed, cfg.synth_crashes);
    out.write("raw/accident.csv", raw.accident.to_string());
    out.write("raw/vehicle.csv", raw.vehicle.to_string());
    out.write("raw/event.csv", raw.event.to_string());
    s.stats["crashes"] = std::to_string(raw.accident.rows());
    s.stats["vehicles"] = std::to_string(raw.vehicle.rows());
    s.stats["events"] = std::to_string(raw.event.rows());
}

void stage_ingest(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const RawTables raw = RawTables::read(cfg.raw_accident(), cfg.raw_vehicle(), cfg.raw_event());
    SubsetReport rep;
    const RawTables sub = subset(raw, {}, &rep);
    const AttributeSchema& schema = AttributeSchema::builtin();
    const DerivedAttributes attrs = derive_attributes(sub, schema);

    out.write("subset/accident.csv", sub.accident.to_string());
    out.write("subset/vehicle.csv", sub.vehicle.to_string());
    out.write("subset/event.csv", sub.event.to_string());

    std::vector<std::string> header{"crash_id"};
    for (const auto& v : schema.variables) header.push_back(v.name);
    Table t(header);
    for (const auto& [crash, rec] : attrs.values) {
        std::vector<std::string> row{crash};
        for (const auto& v : schema.variables) row.push_back(rec.at(v.name));
        t.add_row(std::move(row));
    }
    out.write("attributes.csv", t.to_string());

    ordered_json levels;
    for (const auto& v : schema.variables) levels[v.name] = attrs.levels.at(v.name);
    out.write("attribute_levels.json", dump(levels));

    ordered_json j;
    j["input_crashes"] = rep.input_crashes;
    j["retained"] = rep.retained;
    j["failures"] = rep.failures;
    j["warnings"] = attrs.warnings;
    out.write("ingest_report.json", dump(j));

    s.stats["input_crashes"] = std::to_string(rep.input_crashes);
    s.stats["retained"] = std::to_string(rep.retained);
    s.warnings = attrs.warnings;
}

void stage_encode(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const fs::path dir = cfg.workdir / "subset";
    const RawTables sub = RawTables::read(dir / "accident.csv", dir / "vehicle.csv", dir / "event.csv");
    const Table attr_table = Table::read(cfg.workdir / "attributes.csv");
    DerivedAttributes attrs;
    const auto id = attr_table.column("crash_id");
    for (std::size_t r = 0; r < attr_table.rows(); ++r) {
        auto& rec = attrs.values[attr_table.at(r, id)];
        for (std::size_t c = 0; c < attr_table.cols(); ++c)
            if (c != id) rec[attr_table.header()[c]] = attr_table.at(r, c);
    }
    const IngestResult res = build_sequences(sub, attrs);

    std::ostringstream jsonl, text;
    write_sequences_jsonl(jsonl, res.sequences);
    write_sequences_text(text, res.sequences);
    out.write("sequences.jsonl", jsonl.str());
    out.write("sequences.txt", text.str());

    std::map<std::string, std::size_t> per_config;
    for (const auto& q : res.sequences) per_config[std::string(1, to_char(*q.crash_config))]++;
    ordered_json j;
    j["sequences"] = res.sequences.size();
    j["weighted_count"] = weighted_count(res.sequences);
    j["dropped"] = res.dropped;
    j["swapped"] = res.swapped;
    j["missing_rules"] = res.missing_rules;
    j["per_config"] = per_config;
    j["warnings"] = res.warnings;
    out.write("encode_report.json", dump(j));

    s.stats["sequences"] = std::to_string(res.sequences.size());
    s.stats["dropped"] = std::to_string(res.dropped);
    s.stats["weighted_count"] = num(weighted_count(res.sequences));
    s.warnings = res.warnings;
}

void stage_distmat(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    cfg.costs.validate();
    if (cfg.costs.metric_warning()) s.warnings.push_back("substitution cost exceeds twice the indel cost; distances may not be metric");
    const auto seqs = load_sequences(cfg.workdir);
    std::size_t total = 0;
    for (const auto& [c, g] : group_sequences(seqs)) {
        const auto sym = symbolize(g.tokens);
        const DissimMatrix m = distance_matrix(sym, g.sequences, cfg.costs, cfg.threads);
        out.write_matrix(matrix_name(c, cfg.binary_matrix), m, cfg.binary_matrix);
        s.stats[std::string("distinct_") + to_char(c)] = std::to_string(g.sequences.size());
        total += g.sequences.size();
    }
    s.stats["distinct_sequences"] = std::to_string(total);
}

void stage_sweep(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const auto seqs = load_sequences(cfg.workdir);
    Table t({"config", "k", "asw_w", "hg", "pbc", "hc", "z_asw_w", "z_hg", "z_pbc", "z_hc", "degenerate"});
    for (const auto& [c, g] : group_sequences(seqs)) {
        const DissimMatrix m = load_group_matrix(cfg.workdir, g);
        const QualityReport rep = k_sweep(m, g.weights, cfg.k_min, cfg.k_max, cfg.seed, cfg.threads);
        if (rep.rows.empty()) {
            s.warnings.push_back(std::string("configuration ") + to_char(c) + ": too few distinct sequences for the sweep");
            continue;
        }
        for (const auto& r : rep.rows)
            t.add_row({std::string(1, to_char(c)), std::to_string(r.k), num(r.raw.asw_w), num(r.raw.hg), num(r.raw.pbc),
                       num(r.raw.hc), num(r.z.asw_w), num(r.z.hg), num(r.z.pbc), num(r.z.hc),
                       rep.degenerate ? "1" : "0"});
        s.stats[std::string("rows_") + to_char(c)] = std::to_string(rep.rows.size());
    }
    out.write("quality.csv", t.to_string());
}

/// k per configuration from quality.csv using the standardised-index heuristic.
std::map<CrashConfig, std::size_t> auto_k(const fs::path& workdir) {
    const Table t = Table::read(workdir / "quality.csv");
    std::map<CrashConfig, QualityReport> reps;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        auto c = config_from_char(t.at(r, t.column("config"))[0]);
        QualityRow row;
        row.k = static_cast<std::size_t>(parse_int(t.at(r, t.column("k"))).value_or(0));
        row.z.asw_w = parse_double(t.at(r, t.column("z_asw_w"))).value_or(0);
        row.z.hg = parse_double(t.at(r, t.column("z_hg"))).value_or(0);
        row.z.pbc = parse_double(t.at(r, t.column("z_pbc"))).value_or(0);
        row.z.hc = parse_double(t.at(r, t.column("z_hc"))).value_or(0);
        if (c) reps[*c].rows.push_back(row);
    }
    std::map<CrashConfig, std::size_t> out;
    for (const auto& [c, rep] : reps) out[c] = choose_k(rep);
    return out;
}

void stage_cluster(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const auto seqs = load_sequences(cfg.workdir);
    std::map<CrashConfig, std::size_t> ks = default_types_per_config();
    if (cfg.k_auto) {
        for (const auto& [c, k] : auto_k(cfg.workdir)) ks[c] = k;
    }
    for (const auto& [c, k] : cfg.k) ks[c] = k;

    ordered_json j;
    j["configs"] = ordered_json::array();
    std::map<std::string, std::string> type_of;  // "config|sequence" -> label
    std::size_t types = 0;
    double grand_total = weighted_count(seqs);
    for (const auto& [c, g] : group_sequences(seqs)) {
        const DissimMatrix m = load_group_matrix(cfg.workdir, g);
        std::size_t k = ks.count(c) ? ks[c] : 2;
        if (k > g.sequences.size()) {
            s.warnings.push_back(std::string("configuration ") + to_char(c) + ": k=" + std::to_string(k) +
                                 " capped at " + std::to_string(g.sequences.size()) + " distinct sequences");
        }
        const ConfigTypes ct = cluster_group(g, m, k, 2, cfg.seed);
        if (ct.too_small)
            s.warnings.push_back(std::string("configuration ") + to_char(c) + ": group too small, one type");
        ordered_json cj;
        cj["config"] = std::string(1, to_char(c));
        cj["k"] = ct.partition.k;
        cj["weight"] = ct.total_weight;
        cj["share_of_all"] = grand_total > 0 ? ct.total_weight / grand_total : 0.0;
        cj["total_cost"] = ct.partition.total_cost;
        cj["types"] = ordered_json::array();
        for (std::size_t t = 0; t < ct.partition.k; ++t) {
            // Top three member sequences by weight (ties: first appearance).
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < g.sequences.size(); ++i)
                if (ct.partition.assignment[i] == t) members.push_back(i);
            std::stable_sort(members.begin(), members.end(),
                             [&](std::size_t a, std::size_t b) { return g.weights[a] > g.weights[b]; });
            ordered_json reps = ordered_json::array();
            for (std::size_t r = 0; r < members.size() && r < 3; ++r)
                reps.push_back({{"sequence", g.sequences[members[r]]},
                                {"share_in_type", g.weights[members[r]] / ct.cluster_weight[t]}});
            cj["types"].push_back({{"label", ct.labels[t]},
                                   {"medoid", ct.partition.medoid_ids[t]},
                                   {"weight", ct.cluster_weight[t]},
                                   {"crashes", ct.cluster_count[t]},
                                   {"share_in_config", ct.cluster_weight[t] / ct.total_weight},
                                   {"share_of_all", grand_total > 0 ? ct.cluster_weight[t] / grand_total : 0.0},
                                   {"representatives", reps}});
        }
        for (std::size_t i = 0; i < g.sequences.size(); ++i)
            type_of[std::string(1, to_char(c)) + "|" + g.sequences[i]] = ct.labels[ct.partition.assignment[i]];
        types += ct.partition.k;
        j["configs"].push_back(std::move(cj));
    }
    out.write("clusters.json", dump(j));

    Table a({"crash_id", "config", "sequence", "seqtype"});
    for (const auto& q : seqs) {
        if (!q.crash_config) continue;
        const std::string cfg_s(1, to_char(*q.crash_config));
        const std::string seq = render(q);
        a.add_row({q.crash_id, cfg_s, seq, type_of.at(cfg_s + "|" + seq)});
    }
    out.write("assignments.csv", a.to_string());
    s.stats["types"] = std::to_string(types);
}

ArcConstraints effective_constraints(const PipelineConfig& cfg) {
    ArcConstraints c;
    if (!cfg.constraints.empty()) c = ArcConstraints::load(cfg.constraints);
    c.forbidden.insert(c.forbidden.end(), cfg.forbid.begin(), cfg.forbid.end());
    c.forced.insert(c.forced.end(), cfg.force.begin(), cfg.force.end());
    return c;
}

std::string strength_csv(const std::vector<ArcStrength>& strengths, double weak_threshold) {
    Table t({"parent", "child", "strength", "weak"});
    for (const auto& a : strengths)
        t.add_row({a.parent, a.child, num(a.strength), a.strength > weak_threshold ? "1" : "0"});
    return t.to_string();
}

void stage_learn(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const LearningData ld = load_learning_data(cfg.workdir);
    const ArcConstraints cons = effective_constraints(cfg);
    HillClimbOptions opt;
    opt.restarts = cfg.restarts;
    opt.seed = cfg.seed;
    const LearnResult lr = hill_climb(ld.data, cfg.score, cons, opt);
    BayesNet net = fit_parameters(lr.dag, ld.data, cfg.alpha);
    net.fit = lr.fit;
    const auto strengths = arc_strength(lr.dag, ld.data, cfg.score);
    out.write("network.json", network_to_json(net));
    out.write("network.dot", network_to_dot(net, strengths, cfg.weak_threshold));
    s.stats["arcs"] = std::to_string(lr.dag.num_arcs());
    s.stats["aic"] = num(lr.fit.aic);
    s.stats["loglik"] = num(lr.fit.loglik);
    s.stats["iterations"] = std::to_string(lr.iterations);
    s.stats["records"] = std::to_string(ld.data.size());
}

void stage_strength(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const LearningData ld = load_learning_data(cfg.workdir);
    const BayesNet net = network_from_json(read_text(cfg.workdir / "network.json"));
    if (net.variables().size() != ld.data.num_variables()) throw DataError("network.json does not match the data (rerun learn)");
    for (std::size_t v = 0; v < net.size(); ++v)
        if (net.variables()[v].name != ld.data.variables()[v].name)
            throw DataError("network.json does not match the data (rerun learn)");
    const auto strengths = arc_strength(net.dag(), ld.data, cfg.score);
    out.write("strength.csv", strength_csv(strengths, cfg.weak_threshold));

    // Partial networks: sequence type with outcomes, and without outcomes.
    std::vector<std::string> outcomes{"seqtype"}, rest;
    for (const auto& v : ld.data.variables()) {
        if (v.name == "maxsev" || v.name == "moc") outcomes.push_back(v.name);
        else rest.push_back(v.name);
    }
    std::vector<std::vector<std::string>> subsets;
    if (outcomes.size() > 1) subsets.push_back(outcomes);
    if (rest.size() > 1 && rest.size() < ld.data.num_variables()) subsets.push_back(rest);
    HillClimbOptions opt;
    opt.restarts = cfg.restarts;
    opt.seed = cfg.seed;
    const auto entries = stability_report(ld.data, net.dag(), subsets, cfg.score, effective_constraints(cfg), opt);
    ordered_json j = ordered_json::array();
    for (const auto& e : entries) {
        ordered_json ej;
        ej["variables"] = e.variables;
        ej["added"] = ordered_json::array();
        for (const auto& [p, c] : e.added) ej["added"].push_back({p, c});
        ej["removed"] = ordered_json::array();
        for (const auto& [p, c] : e.removed) ej["removed"].push_back({p, c});
        j.push_back(std::move(ej));
    }
    out.write("stability.json", dump(j));
    std::size_t weak = 0;
    for (const auto& a : strengths)
        if (a.strength > cfg.weak_threshold) ++weak;
    s.stats["arcs"] = std::to_string(strengths.size());
    s.stats["weak_arcs"] = std::to_string(weak);
}

void stage_query(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    const BayesNet net = network_from_json(read_text(cfg.workdir / "network.json"));
    Query defaults;
    defaults.replications = cfg.replications;
    defaults.samples = cfg.samples;
    defaults.seed = derive_seed(cfg.seed, 0x9e7);
    if (cfg.scale) {
        defaults.scale = *cfg.scale;
    } else {
        const auto rep = nlohmann::json::parse(read_text(cfg.workdir / "encode_report.json"));
        defaults.scale = rep.at("weighted_count").get<double>();
    }
    const bool builtin = cfg.queries.empty();
    const auto qs = queries_from_json(builtin ? std::string(embedded::default_queries_json()) : read_text(cfg.queries), defaults);

    ordered_json index = ordered_json::array();
    for (const auto& q : qs) {
        QueryResult r;
        try {
            r = query(net, q, cfg.threads);
        } catch (const Error& e) {
            // The built-in queries name levels that small data sets may lack.
            if (!builtin) throw;
            s.warnings.push_back("query " + q.name + " skipped: " + e.what());
            continue;
        }
        const std::string base = "queries/" + q.name;
        out.write(base + ".csv", query_to_csv(r));
        out.write(base + "_long.csv", query_to_long_csv(r));
        out.write(base + ".json", query_to_json(r));
        if (q.targets.size() == 1) out.write(base + ".svg", query_to_svg(r));
        index.push_back(q.name);
    }
    out.write("queries/index.json", dump(index));
    s.stats["queries"] = std::to_string(index.size());
}

void stage_report(const PipelineConfig& cfg, Artifacts& out, StageSummary& s) {
    std::ostringstream md;
    md << "# Crash scenario pipeline report\n\n";
    const auto enc = nlohmann::json::parse(read_text(cfg.workdir / "encode_report.json"));
    md << "Sequences: " << enc.at("sequences").get<std::size_t>() << " crashes (weighted count "
       << num(std::round(enc.at("weighted_count").get<double>() * 1000.0) / 1000.0) << "), "
       << enc.at("dropped").get<std::size_t>() << " dropped during encoding.\n\n";

    const auto clusters = nlohmann::json::parse(read_text(cfg.workdir / "clusters.json"));
    md << "## Sequence types\n\n| type | share of all | crashes | representative sequence |\n|---|---:|---:|---|\n";
    for (const auto& c : clusters.at("configs"))
        for (const auto& t : c.at("types")) {
            char share[32];
            std::snprintf(share, sizeof share, "%.1f%%", 100.0 * t.at("share_of_all").get<double>());
            md << "| " << t.at("label").get<std::string>() << " | " << share << " | " << t.at("crashes").get<std::size_t>()
               << " | " << t.at("medoid").get<std::string>() << " |\n";
        }

    md << "\n## Network arcs\n\n";
    const fs::path strength = cfg.workdir / "strength.csv";
    if (fs::exists(strength)) {
        const Table t = Table::read(strength);
        md << "| parent | child | strength | weak |\n|---|---|---:|---|\n";
        for (std::size_t r = 0; r < t.rows(); ++r) {
            const double v = parse_double(t.at(r, 2)).value_or(0.0);
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.1f", v);
            md << "| " << t.at(r, 0) << " | " << t.at(r, 1) << " | " << buf << " | " << (t.at(r, 3) == "1" ? "yes" : "no")
               << " |\n";
        }
    } else {
        md << "No strength table (run the strength stage).\n";
    }
    md << '\n';

    std::vector<QueryResult> results;
    const fs::path idx = cfg.workdir / "queries" / "index.json";
    if (fs::exists(idx))
        for (const auto& name : nlohmann::json::parse(read_text(idx)))
            results.push_back(query_result_from_json(read_text(cfg.workdir / "queries" / (name.get<std::string>() + ".json"))));
    std::string scen = scenario_report(results);
    // Nest the scenario document one heading level deeper.
    md << "#" << scen;
    out.write("report.md", md.str());
    s.stats["queries"] = std::to_string(results.size());
}

void write_manifest(const fs::path& workdir) {
    ordered_json j = ordered_json::object();
    for (const auto& [rel, digest] : directory_digests(workdir)) j[rel] = digest;
    std::ofstream out(workdir / "manifest.json", std::ios::binary);
    out << dump(j);
}

}  // namespace

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> s{"synth",   "ingest", "encode",   "distmat", "sweep",
                                            "cluster", "learn",  "strength", "query",   "report"};
    return s;
}

StageSummary run_stage(std::string_view stage, const PipelineConfig& config) {
    using Fn = void (*)(const PipelineConfig&, Artifacts&, StageSummary&);
    static const std::map<std::string, Fn, std::less<>> table{
        {"synth", stage_synth},     {"ingest", stage_ingest}, {"encode", stage_encode},     {"distmat", stage_distmat},
        {"sweep", stage_sweep},     {"cluster", stage_cluster}, {"learn", stage_learn},     {"strength", stage_strength},
        {"query", stage_query},     {"report", stage_report}};
    auto it = table.find(stage);
    if (it == table.end()) throw ConfigError("unknown stage " + std::string(stage));
    StageSummary s;
    s.stage = std::string(stage);
    fs::create_directories(config.workdir);
    Artifacts out(config.workdir, s);
    log(s.stage, "start");
    it->second(config, out, s);
    out.commit();
    write_manifest(config.workdir);
    for (const auto& w : s.warnings) log(s.stage, "warning: " + w);
    log(s.stage, "done (" + std::to_string(s.artifacts.size()) + " artifacts)");
    return s;
}

std::vector<StageSummary> run_all(const PipelineConfig& config, bool synthesize) {
    std::vector<StageSummary> out;
    for (const auto& st : pipeline_stages()) {
        if (st == "synth" && !synthesize) continue;
        out.push_back(run_stage(st, config));
    }
    return out;
}

std::string summary_json(const std::vector<StageSummary>& summaries, int exit_code, const std::string& error) {
    ordered_json j;
    j["exit_code"] = exit_code;
    if (!error.empty()) j["error"] = error;
    j["stages"] = ordered_json::array();
    for (const auto& s : summaries)
        j["stages"].push_back({{"stage", s.stage}, {"artifacts", s.artifacts}, {"stats", s.stats}, {"warnings", s.warnings}});
    return j.dump() + "\n";
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

std::map<std::string, std::string> directory_digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), dir).generic_string();
        if (rel == "manifest.json") continue;
        out[rel] = file_digest(e.path());
    }
    return out;
}

LearningData load_learning_data(const fs::path& workdir) {
    const auto seqs = load_sequences(workdir);
    const Table assign = Table::read(workdir / "assignments.csv");
    std::map<std::string, std::string> seqtype;
    for (std::size_t r = 0; r < assign.rows(); ++r)
        seqtype[assign.at(r, assign.column("crash_id"))] = assign.at(r, assign.column("seqtype"));

    const auto clusters = nlohmann::json::parse(read_text(workdir / "clusters.json"));
    const auto levels_json = nlohmann::ordered_json::parse(read_text(workdir / "attribute_levels.json"));

    std::vector<Variable> declared;
    Variable st{"seqtype", {}};
    for (const auto& c : clusters.at("configs"))
        for (const auto& t : c.at("types")) st.levels.push_back(t.at("label").get<std::string>());
    declared.push_back(std::move(st));
    for (const auto& [name, lv] : levels_json.items()) declared.push_back({name, lv.get<std::vector<std::string>>()});

    // Levels never observed are dropped so they do not inflate the parameter count.
    std::vector<std::set<std::string>> seen(declared.size());
    std::vector<std::vector<std::string>> rows;
    std::vector<double> weights;
    for (const auto& q : seqs) {
        auto it = seqtype.find(q.crash_id);
        if (it == seqtype.end()) continue;
        std::vector<std::string> row{it->second};
        for (std::size_t v = 1; v < declared.size(); ++v) {
            auto a = q.attributes.find(declared[v].name);
            if (a == q.attributes.end()) throw DataError("sequence " + q.crash_id + " lacks attribute " + declared[v].name);
            row.push_back(a->second);
        }
        for (std::size_t v = 0; v < declared.size(); ++v) {
            const auto& lv = declared[v].levels;
            if (std::find(lv.begin(), lv.end(), row[v]) == lv.end()) throw LevelMismatch(declared[v].name, row[v]);
            seen[v].insert(row[v]);
        }
        rows.push_back(std::move(row));
        weights.push_back(q.weight);
    }
    if (rows.empty()) throw DataError("no sequences with a type assignment");
    std::vector<Variable> vars;
    for (std::size_t v = 0; v < declared.size(); ++v) {
        Variable x{declared[v].name, {}};
        for (const auto& l : declared[v].levels)
            if (seen[v].count(l)) x.levels.push_back(l);
        vars.push_back(std::move(x));
    }
    LearningData out{Dataset(std::move(vars)), 0.0};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.data.add_record(rows[r], weights[r]);
        out.population += weights[r];
    }
    return out;
}

}  // namespace crashscen
