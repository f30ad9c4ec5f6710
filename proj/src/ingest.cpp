#include "crashscen/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "crashscen/embedded_data.hpp"
#include "crashscen/error.hpp"
#include "crashscen/rng.hpp"

namespace crashscen {

using nlohmann::json;

RawTables RawTables::read(const std::filesystem::path& accident_csv, const std::filesystem::path& vehicle_csv,
                          const std::filesystem::path& event_csv) {
    return RawTables{Table::read(accident_csv), Table::read(vehicle_csv), Table::read(event_csv)};
}

void RawTables::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    accident.write(dir / "accident.csv");
    vehicle.write(dir / "vehicle.csv");
    event.write(dir / "event.csv");
}

namespace {

using RowIndex = std::unordered_map<std::string, std::vector<std::size_t>>;

RowIndex index_rows(const Table& t, const std::string& id_column) {
    RowIndex idx;
    const auto c = t.column(id_column);
    for (std::size_t r = 0; r < t.rows(); ++r) idx[t.at(r, c)].push_back(r);
    return idx;
}

std::optional<long long> cell_int(const Table& t, std::size_t row, std::size_t col) {
    return parse_int(t.at(row, col));
}

struct Criterion {
    const char* column;
    std::function<bool(long long)> holds;
};

const std::vector<Criterion>& crash_criteria() {
    static const std::vector<Criterion> c{
        {"VE_TOTAL", [](long long v) { return v == 2; }},
        {"VE_FORMS", [](long long v) { return v == 2; }},
        {"PVH_INVL", [](long long v) { return v == 0; }},
        {"RELJCT2_IM", [](long long v) { return v == 2 || v == 3; }},
        {"WRK_ZONE", [](long long v) { return v == 0; }},
        {"ALCHL_IM", [](long long v) { return v != 1; }},
    };
    return c;
}

const std::vector<Criterion>& vehicle_criteria() {
    static const std::vector<Criterion> c{
        {"BDYTYP_IM", [](long long v) { return v < 50; }},
        {"TOW_VEH", [](long long v) { return v == 0; }},
        {"BUS_USE", [](long long v) { return v == 0; }},
        {"SPEC_USE", [](long long v) { return v == 0; }},
        {"EMER_USE", [](long long v) { return v == 0; }},
    };
    return c;
}

Table filter_rows(const Table& t, const std::string& id_column, const std::set<std::string>& keep) {
    Table out(t.header());
    const auto c = t.column(id_column);
    for (std::size_t r = 0; r < t.rows(); ++r)
        if (keep.count(t.at(r, c))) out.add_row(t.row(r));
    return out;
}

}  // namespace

const std::vector<std::string>& subset_crash_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> v;
        for (const auto& c : crash_criteria()) v.emplace_back(c.column);
        return v;
    }();
    return cols;
}

const std::vector<std::string>& subset_vehicle_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> v;
        for (const auto& c : vehicle_criteria()) v.emplace_back(c.column);
        return v;
    }();
    return cols;
}

RawTables subset(const RawTables& raw, const IngestOptions& options, SubsetReport* report) {
    const auto& id = options.id_column;
    const auto acc_id = raw.accident.column(id);
    raw.vehicle.column(id);
    raw.event.column(id);
    std::vector<std::size_t> crash_cols, veh_cols;
    for (const auto& c : crash_criteria()) crash_cols.push_back(raw.accident.column(c.column));
    for (const auto& c : vehicle_criteria()) veh_cols.push_back(raw.vehicle.column(c.column));

    const RowIndex vehicles = index_rows(raw.vehicle, id);
    SubsetReport rep;
    rep.input_crashes = raw.accident.rows();
    std::set<std::string> keep;

    for (std::size_t r = 0; r < raw.accident.rows(); ++r) {
        const std::string& crash = raw.accident.at(r, acc_id);
        bool ok = true;
        for (std::size_t i = 0; i < crash_criteria().size(); ++i) {
            auto v = cell_int(raw.accident, r, crash_cols[i]);
            if (!v || !crash_criteria()[i].holds(*v)) {
                ok = false;
                ++rep.failures[crash_criteria()[i].column];
            }
        }
        auto it = vehicles.find(crash);
        if (it == vehicles.end() || it->second.size() != 2) {
            ok = false;
            ++rep.failures["vehicle_rows"];
        } else {
            for (std::size_t i = 0; i < vehicle_criteria().size(); ++i) {
                bool both = true;
                for (std::size_t vr : it->second) {
                    auto v = cell_int(raw.vehicle, vr, veh_cols[i]);
                    if (!v || !vehicle_criteria()[i].holds(*v)) both = false;
                }
                if (!both) {
                    ok = false;
                    ++rep.failures[vehicle_criteria()[i].column];
                }
            }
        }
        if (ok) keep.insert(crash);
    }
    rep.retained = keep.size();
    if (report) *report = rep;

    RawTables out{filter_rows(raw.accident, id, keep), filter_rows(raw.vehicle, id, keep),
                  filter_rows(raw.event, id, keep)};
    return out;
}

// -- attribute schema ---------------------------------------------------------

namespace {

AttributeScope scope_from_string(const std::string& s) {
    if (s == "crash") return AttributeScope::Crash;
    if (s == "vehicle_pair") return AttributeScope::VehiclePair;
    if (s == "vehicle_flag_pair") return AttributeScope::VehicleFlagPair;
    if (s == "vehicle_pair_topn") return AttributeScope::VehiclePairTopN;
    if (s == "vehicle_first") return AttributeScope::VehicleFirst;
    throw ConfigError("unknown attribute scope '" + s + "'");
}

std::vector<std::string> pair_levels(const std::vector<std::string>& sides) {
    std::vector<std::string> out;
    for (const auto& a : sides)
        for (const auto& b : sides) out.push_back(a + "+" + b);
    return out;
}

}  // namespace

AttributeSchema AttributeSchema::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("attribute schema: ") + e.what());
    }
    AttributeSchema s;
    s.unknown_label = j.value("unknown_label", std::string("Unknown"));
    for (const auto& v : j.at("variables")) {
        AttributeVariable a;
        a.name = v.at("name").get<std::string>();
        a.scope = scope_from_string(v.at("scope").get<std::string>());
        a.columns = v.at("columns").get<std::vector<std::string>>();
        if (a.columns.empty()) throw ConfigError("attribute " + a.name + " has no source columns");
        a.levels = v.value("levels", std::vector<std::string>{});
        a.side_levels = v.value("side_levels", std::vector<std::string>{});
        if (v.contains("codes")) {
            for (const auto& [k, label] : v.at("codes").items()) {
                auto code = parse_int(k);
                if (!code) throw ConfigError("attribute " + a.name + ": bad code key '" + k + "'");
                a.codes[*code] = label.get<std::string>();
            }
        }
        if (v.contains("ranges"))
            for (const auto& r : v.at("ranges"))
                a.ranges.push_back({r.at("from").get<long long>(), r.at("to").get<long long>(),
                                    r.at("label").get<std::string>()});
        if (v.contains("fallback")) a.fallback = v.at("fallback").get<std::string>();
        if (v.contains("flag_codes"))
            for (long long c : v.at("flag_codes").get<std::vector<long long>>()) a.flag_codes.insert(c);
        a.top_n = v.value("top_n", std::size_t{6});
        if (v.contains("unknown_codes"))
            for (long long c : v.at("unknown_codes").get<std::vector<long long>>()) a.unknown_codes.insert(c);
        a.other_label = v.value("other_label", std::string("Other"));
        a.note = v.value("note", std::string{});

        switch (a.scope) {
            case AttributeScope::Crash:
            case AttributeScope::VehicleFirst:
                if (a.levels.empty()) throw ConfigError("attribute " + a.name + " has an empty level set");
                break;
            case AttributeScope::VehiclePair:
                if (a.side_levels.empty()) throw ConfigError("attribute " + a.name + " has no side levels");
                a.levels = pair_levels(a.side_levels);
                break;
            case AttributeScope::VehicleFlagPair:
                a.side_levels = {"N", "Y"};
                a.levels = pair_levels(a.side_levels);
                break;
            case AttributeScope::VehiclePairTopN:
                break;  // data-driven
        }
        if (s.find(a.name)) throw ConfigError("duplicate attribute " + a.name);
        s.variables.push_back(std::move(a));
    }
    return s;
}

AttributeSchema AttributeSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

const AttributeSchema& AttributeSchema::builtin() {
    static const AttributeSchema s = from_json(embedded::attribute_schema_json());
    return s;
}

const AttributeVariable* AttributeSchema::find(std::string_view name) const {
    for (const auto& v : variables)
        if (v.name == name) return &v;
    return nullptr;
}

// -- attribute derivation -----------------------------------------------------

namespace {

/// Vehicle rows of one crash by role after renumbering.
struct CrashVehicles {
    std::size_t v1_row = 0;
    std::size_t v2_row = 0;
    Renumbering renumbering;
};

std::optional<CrashVehicles> resolve_vehicles(const RawTables& raw, const std::vector<std::size_t>& rows,
                                              const RenumberTable& renumber, const IngestOptions& options) {
    if (rows.size() != 2) return std::nullopt;
    const auto c_no = raw.vehicle.column(options.vehicle_number_column);
    const auto c_pos = raw.vehicle.column(options.position_column);
    std::optional<std::size_t> orig1, orig2;
    for (std::size_t r : rows) {
        auto no = cell_int(raw.vehicle, r, c_no);
        if (no == 1) orig1 = r;
        if (no == 2) orig2 = r;
    }
    if (!orig1 || !orig2) return std::nullopt;
    const auto p1 = cell_int(raw.vehicle, *orig1, c_pos).value_or(-1);
    const auto p2 = cell_int(raw.vehicle, *orig2, c_pos).value_or(-1);
    CrashVehicles cv;
    cv.renumbering = renumber_or_keep(renumber, static_cast<int>(p1), static_cast<int>(p2));
    if (cv.renumbering.swapped()) {
        cv.v1_row = *orig2;
        cv.v2_row = *orig1;
    } else {
        cv.v1_row = *orig1;
        cv.v2_row = *orig2;
    }
    return cv;
}

class WarningLog {
public:
    void add(const std::string& msg) { ++counts_[msg]; }
    std::vector<std::string> lines() const {
        std::vector<std::string> out;
        for (const auto& [msg, n] : counts_) out.push_back(msg + " (" + std::to_string(n) + " crashes)");
        return out;
    }

private:
    std::map<std::string, std::size_t> counts_;
};

std::string map_code(const AttributeVariable& var, const std::string& cell, const std::string& unknown,
                     WarningLog& log) {
    auto code = parse_int(cell);
    if (!code) {
        log.add(var.name + ": missing or non-numeric value '" + cell + "' mapped to " + unknown);
        return unknown;
    }
    for (const auto& r : var.ranges)
        if (*code >= r.from && *code <= r.to) return r.label;
    if (auto it = var.codes.find(*code); it != var.codes.end()) return it->second;
    if (var.fallback) return *var.fallback;
    log.add(var.name + ": unmapped value " + cell + " mapped to " + unknown);
    return unknown;
}

/// The unknown label a variable can actually hold: for paired variables the
/// side level that stands for unknown ("U" / "Unknown").
std::string side_unknown(const AttributeVariable& var, const std::string& unknown) {
    for (const auto& s : var.side_levels)
        if (s == unknown || s == "U") return s;
    return unknown;
}

}  // namespace

DerivedAttributes derive_attributes(const RawTables& raw, const AttributeSchema& schema,
                                    const RenumberTable& renumber, const IngestOptions& options) {
    const auto& id = options.id_column;
    const auto acc_id = raw.accident.column(id);
    const RowIndex vehicles = index_rows(raw.vehicle, id);
    const auto weight_col = raw.accident.find_column(options.weight_column);

    // Resolve every source column up front so MissingColumn surfaces early.
    std::map<std::string, std::vector<std::size_t>> cols;
    for (const auto& v : schema.variables) {
        const Table& src = v.scope == AttributeScope::Crash ? raw.accident : raw.vehicle;
        for (const auto& c : v.columns) cols[v.name].push_back(src.column(c));
    }

    DerivedAttributes out;
    WarningLog log;
    // Raw pair labels for top-N variables, resolved after the pass.
    std::map<std::string, std::map<std::string, double>> topn_share;

    for (std::size_t r = 0; r < raw.accident.rows(); ++r) {
        const std::string& crash = raw.accident.at(r, acc_id);
        auto vit = vehicles.find(crash);
        std::optional<CrashVehicles> cv;
        if (vit != vehicles.end()) cv = resolve_vehicles(raw, vit->second, renumber, options);
        double w = 1.0;
        if (weight_col) w = parse_double(raw.accident.at(r, *weight_col)).value_or(1.0);

        auto& rec = out.values[crash];
        for (const auto& v : schema.variables) {
            const auto& vc = cols[v.name];
            const std::string unknown = side_unknown(v, schema.unknown_label);
            if (v.scope == AttributeScope::Crash) {
                rec[v.name] = map_code(v, raw.accident.at(r, vc[0]), schema.unknown_label, log);
                continue;
            }
            if (!cv) {
                log.add(v.name + ": crash without two numbered vehicles mapped to " + schema.unknown_label);
                rec[v.name] = v.scope == AttributeScope::VehicleFirst ? schema.unknown_label
                                                                      : unknown + "+" + unknown;
                continue;
            }
            const std::size_t rows[2] = {cv->v1_row, cv->v2_row};
            switch (v.scope) {
                case AttributeScope::VehicleFirst:
                    rec[v.name] = map_code(v, raw.vehicle.at(rows[0], vc[0]), schema.unknown_label, log);
                    break;
                case AttributeScope::VehiclePair: {
                    std::string sides[2];
                    for (int s = 0; s < 2; ++s) sides[s] = map_code(v, raw.vehicle.at(rows[s], vc[0]), unknown, log);
                    rec[v.name] = sides[0] + "+" + sides[1];
                    break;
                }
                case AttributeScope::VehicleFlagPair: {
                    std::string sides[2];
                    for (int s = 0; s < 2; ++s) {
                        bool flagged = false;
                        for (std::size_t c : vc) {
                            auto code = cell_int(raw.vehicle, rows[s], c);
                            if (code && v.flag_codes.count(*code)) flagged = true;
                        }
                        sides[s] = flagged ? "Y" : "N";
                    }
                    rec[v.name] = sides[0] + "+" + sides[1];
                    break;
                }
                case AttributeScope::VehiclePairTopN: {
                    std::optional<long long> codes[2];
                    for (int s = 0; s < 2; ++s) codes[s] = cell_int(raw.vehicle, rows[s], vc[0]);
                    std::string label;
                    if (!codes[0] || !codes[1] || v.unknown_codes.count(*codes[0]) || v.unknown_codes.count(*codes[1]))
                        label = schema.unknown_label;
                    else
                        label = std::to_string(*codes[0]) + "+" + std::to_string(*codes[1]);
                    rec[v.name] = label;
                    topn_share[v.name][label] += w;
                    break;
                }
                case AttributeScope::Crash: break;
            }
        }
    }

    for (const auto& v : schema.variables) {
        if (v.scope != AttributeScope::VehiclePairTopN) {
            out.levels[v.name] = v.levels;
            continue;
        }
        std::vector<std::pair<std::string, double>> ranked(topn_share[v.name].begin(), topn_share[v.name].end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::set<std::string> kept;
        auto& lv = out.levels[v.name];
        for (std::size_t i = 0; i < ranked.size() && i < v.top_n; ++i) {
            kept.insert(ranked[i].first);
            lv.push_back(ranked[i].first);
        }
        lv.push_back(v.other_label);
        for (auto& [crash, rec] : out.values)
            if (!kept.count(rec[v.name])) rec[v.name] = v.other_label;
    }
    out.warnings = log.lines();
    return out;
}

// -- crash configurations -----------------------------------------------------

CrashConfigTable CrashConfigTable::from_csv(std::string_view text, const std::string& source) {
    const Table t = Table::parse(text, source);
    const auto c_cfg = t.column("config");
    const auto c_first = t.column("first_code");
    const auto c_last = t.column("last_code");
    const auto c_desc = t.column("description");
    CrashConfigTable out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const std::string cfg = trim(t.at(r, c_cfg));
        auto c = cfg.size() == 1 ? config_from_char(cfg[0]) : std::nullopt;
        auto first = parse_int(t.at(r, c_first));
        auto last = parse_int(t.at(r, c_last));
        if (!c || !first || !last || *first > *last) throw DataError(source + ": bad configuration row " + cfg);
        out.ranges_.push_back({*c, static_cast<int>(*first), static_cast<int>(*last), t.at(r, c_desc)});
    }
    return out;
}

const CrashConfigTable& CrashConfigTable::builtin() {
    static const CrashConfigTable t = from_csv(embedded::crash_configs_csv(), "data/crash_configs.csv");
    return t;
}

std::optional<CrashConfig> CrashConfigTable::config_for(int crash_type) const {
    for (const auto& r : ranges_)
        if (crash_type >= r.first && crash_type <= r.last) return r.config;
    return std::nullopt;
}

const CrashConfigTable::Range* CrashConfigTable::range(CrashConfig c) const {
    for (const auto& r : ranges_)
        if (r.config == c) return &r;
    return nullptr;
}

// -- sequence building --------------------------------------------------------

IngestResult build_sequences(const RawTables& raw, const DerivedAttributes& attributes, const Codebooks& books,
                             const IngestOptions& options) {
    const auto& id = options.id_column;
    const auto acc_id = raw.accident.column(id);
    const auto weight_col = raw.accident.find_column(options.weight_column);
    const RowIndex vehicles = index_rows(raw.vehicle, id);
    const RowIndex events = index_rows(raw.event, id);
    const auto c_pos = raw.vehicle.column(options.position_column);
    const std::size_t c_pc[3] = {raw.vehicle.column(options.pcrash1_column),
                                 raw.vehicle.column(options.pcrash2_column),
                                 raw.vehicle.column(options.pcrash3_column)};
    const auto c_evno = raw.event.column(options.event_number_column);
    const auto c_evveh = raw.event.column(options.event_vehicle_column);
    const auto c_soe = raw.event.column(options.soe_column);
    static constexpr Phase kPcrash[3] = {Phase::Pcrash1, Phase::Pcrash2, Phase::Pcrash3};

    IngestResult result;
    WarningLog log;

    for (std::size_t r = 0; r < raw.accident.rows(); ++r) {
        const std::string& crash = raw.accident.at(r, acc_id);
        double weight = 1.0;
        if (weight_col) {
            auto w = parse_double(raw.accident.at(r, *weight_col));
            if (!w || !(*w > 0.0)) {
                log.add("dropped: missing or non-positive sampling weight");
                ++result.dropped;
                continue;
            }
            weight = *w;
        }
        auto vit = vehicles.find(crash);
        std::optional<CrashVehicles> cv;
        if (vit != vehicles.end()) cv = resolve_vehicles(raw, vit->second, *books.renumber, options);
        if (!cv) {
            log.add("dropped: crash does not have vehicles numbered 1 and 2");
            ++result.dropped;
            continue;
        }
        if (!cv->renumbering.rule_found) ++result.missing_rules;
        if (cv->renumbering.swapped()) ++result.swapped;

        const auto pos1 = cell_int(raw.vehicle, cv->v1_row, c_pos).value_or(-1);
        const auto pos2 = cell_int(raw.vehicle, cv->v2_row, c_pos).value_or(-1);
        auto config = books.configs->config_for(static_cast<int>(pos1));
        if (!config) config = books.configs->config_for(static_cast<int>(pos2));
        if (!config) {
            log.add("dropped: crash type outside configurations D-M");
            ++result.dropped;
            continue;
        }

        try {
            PcrashTriple triples[2];
            const std::size_t rows[2] = {cv->v1_row, cv->v2_row};
            for (int s = 0; s < 2; ++s) {
                for (int p = 0; p < 3; ++p) {
                    auto code = cell_int(raw.vehicle, rows[s], c_pc[p]);
                    if (!code) throw UnknownCode(std::string(to_string(kPcrash[p])), -1);
                    triples[s][p] = encode_event(*books.alphabet, kPcrash[p], s == 0 ? Role::V1 : Role::V2,
                                                 static_cast<int>(*code));
                }
            }

            std::vector<std::pair<long long, std::size_t>> ordered;
            if (auto eit = events.find(crash); eit != events.end()) {
                for (std::size_t er : eit->second)
                    ordered.emplace_back(cell_int(raw.event, er, c_evno).value_or(0), er);
            }
            std::stable_sort(ordered.begin(), ordered.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            std::vector<SoeEvent> soe;
            for (const auto& [evno, er] : ordered) {
                SoeEvent e;
                if (auto veh = cell_int(raw.event, er, c_evveh)) e.role = cv->renumbering.role_of(*veh);
                auto code = cell_int(raw.event, er, c_soe);
                if (!code) throw UnknownCode("SOE", -1);
                e.code = books.alphabet->entry_for_code(Phase::Soe, static_cast<int>(*code)).tag;
                soe.push_back(std::move(e));
            }
            // Two different vehicles sharing the first event number.
            if (ordered.size() >= 2 && ordered[0].first == ordered[1].first && soe[0].role != soe[1].role)
                soe[0].role.reset();

            CrashSequence seq = assemble_sequence(triples[0], triples[1], soe, weight, config, *books.alphabet);
            seq.crash_id = crash;
            if (auto ait = attributes.values.find(crash); ait != attributes.values.end())
                seq.attributes = ait->second;
            else
                throw DataError("no derived attributes");
            result.sequences.push_back(std::move(seq));
        } catch (const UnknownCode& e) {
            log.add("dropped: " + std::string(e.what()));
            ++result.dropped;
        } catch (const DataError& e) {
            log.add("dropped: " + std::string(e.what()));
            ++result.dropped;
        }
    }
    result.warnings = log.lines();
    if (result.missing_rules)
        result.warnings.push_back("no renumbering rule for " + std::to_string(result.missing_rules) +
                                  " crashes; original vehicle numbering kept");
    return result;
}

double weighted_count(const std::vector<CrashSequence>& seqs) {
    double total = 0.0;
    for (const auto& s : seqs) total += s.weight;
    return total;
}

// -- synthetic generator ------------------------------------------------------

std::vector<SequencePattern> load_patterns(std::string_view csv_text) {
    const Table t = Table::parse(csv_text, "<patterns>");
    const auto c_type = t.column("type");
    const auto c_cfg = t.column("config");
    const auto c_seq = t.column("sequence");
    const auto c_w = t.column("weight");
    std::vector<SequencePattern> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        auto cfg = t.at(r, c_cfg).size() == 1 ? config_from_char(t.at(r, c_cfg)[0]) : std::nullopt;
        auto w = parse_double(t.at(r, c_w));
        if (!cfg || !w || !(*w > 0)) throw DataError("bad synthetic pattern row " + std::to_string(r + 1));
        out.push_back({t.at(r, c_type), *cfg, t.at(r, c_seq), *w});
    }
    return out;
}

const std::vector<SequencePattern>& builtin_patterns() {
    static const std::vector<SequencePattern> p = load_patterns(embedded::synthetic_patterns_csv());
    return p;
}

namespace {

/// One generated category with the raw code(s) that derive back to it.
struct Category {
    const char* label;
    double share;
    long long code_v1;
    long long code_v2;
};

/// Marginal model for one generated variable. A latent uniform is drawn
/// stratified on a driver variable with probability `coupling`, otherwise
/// independently; the marginal of the latent stays uniform, so the category
/// shares are exact in expectation while the variable depends on its driver.
struct GeneratedVariable {
    std::vector<Category> categories;
    double coupling = 0.0;
};

std::size_t inverse_cdf(const std::vector<Category>& cats, double u) {
    double total = 0.0;
    for (const auto& c : cats) total += c.share;
    double acc = 0.0;
    for (std::size_t i = 0; i < cats.size(); ++i) {
        acc += cats[i].share / total;
        if (u < acc) return i;
    }
    return cats.size() - 1;
}

double shares_sum(const std::vector<Category>& cats) {
    double t = 0;
    for (const auto& c : cats) t += c.share;
    return t;
}

/// Latent uniform stratified on a driver category.
double latent(Rng& rng, double coupling, double stratum_start, double stratum_width) {
    const double pick = rng.uniform();
    const double v = rng.uniform();
    if (pick < coupling) return std::min(stratum_start + stratum_width * v, std::nextafter(1.0, 0.0));
    return v;
}

struct Stratum {
    double start;
    double width;
};

Stratum stratum_of(const std::vector<Category>& cats, std::size_t idx) {
    const double total = shares_sum(cats);
    double start = 0;
    for (std::size_t i = 0; i < idx; ++i) start += cats[i].share / total;
    return {start, cats[idx].share / total};
}

// Shares follow the reference outcome and ODD marginals; "(Other)" remainders
// are spread over concrete levels so that every draw derives to a real label.
const GeneratedVariable kMaxsev{{{"No apparent injury", 0.525, 0, 0},
                                 {"Possible injury", 0.277, 1, 0},
                                 {"Suspected minor injury", 0.115, 2, 0},
                                 {"Suspected serious injury", 0.072, 3, 0},
                                 {"Fatal", 0.004, 4, 0},
                                 {"Injured, severity unknown", 0.005, 5, 0},
                                 {"Unknown", 0.002, 9, 0}},
                                0.6};
const GeneratedVariable kMoc{{{"Front-to-rear", 0.387, 1, 0},
                              {"Sideswipe, same direction", 0.070, 7, 0},
                              {"Angle", 0.470, 6, 0},
                              {"Front-to-front", 0.053, 2, 0},
                              {"Sideswipe, opposite direction", 0.010, 8, 0},
                              {"Other", 0.010, 11, 0}},
                             0.8};
const GeneratedVariable kSpeeding{{{"N+N", 0.905, 0, 0},
                                   {"Y+N", 0.057, 3, 0},
                                   {"U+N", 0.022, 9, 0},
                                   {"N+Y", 0.006, 0, 3},
                                   {"N+U", 0.005, 0, 9},
                                   {"U+U", 0.004, 9, 9},
                                   {"Y+Y", 0.001, 3, 3}},
                                  0.5};
const GeneratedVariable kCareless{{{"N+N", 0.903, 0, 0}, {"Y+N", 0.085, 6, 0}, {"N+Y", 0.010, 0, 6}, {"Y+Y", 0.002, 6, 6}},
                                  0.4};
const GeneratedVariable kDidNotSee{
    {{"N+N", 0.990, 0, 0}, {"Y+N", 0.008, 59, 0}, {"N+Y", 0.001, 0, 59}, {"Y+Y", 0.001, 59, 59}}, 0.0};
const GeneratedVariable kReckless{{{"N+N", 0.967, 0, 0}, {"Y+N", 0.030, 9, 0}, {"N+Y", 0.003, 0, 9}}, 0.0};
const GeneratedVariable kImpropCtrl{{{"N+N", 0.995, 0, 0}, {"Y+N", 0.005, 37, 0}}, 0.0};
const GeneratedVariable kUrbrur{{{"Urban", 0.802, 1, 0}, {"Rural", 0.198, 2, 0}}, 0.0};
const GeneratedVariable kTod{{{"Day", 0.807, 0, 0}, {"Night", 0.193, 1, 0}}, 0.0};
const GeneratedVariable kLight{{{"Daylight", 0.771, 1, 0},
                                {"Dawn", 0.012, 4, 0},
                                {"Dusk", 0.025, 5, 0},
                                {"Dark-Lighted", 0.153, 3, 0},
                                {"Dark-Not Lighted", 0.036, 2, 0},
                                {"Dark-Unknown Lighting", 0.003, 6, 0}},
                               0.95};
const GeneratedVariable kWeather{{{"Clear", 0.732, 1, 0},
                                  {"Cloudy", 0.159, 10, 0},
                                  {"Rain", 0.091, 2, 0},
                                  {"Snow", 0.014, 4, 0},
                                  {"Fog, Smog, Smoke", 0.002, 5, 0},
                                  {"Sleet or Hail", 0.001, 3, 0},
                                  {"Other", 0.001, 8, 0}},
                                 0.3};
const GeneratedVariable kTypint{{{"4-Legged", 0.556, 2, 0},
                                 {"3-Legged", 0.220, 3, 0},
                                 {"Unknown", 0.218, 99, 0},
                                 {"Roundabout", 0.003, 6, 0},
                                 {"Other", 0.003, 1, 0}},
                                0.4};
const GeneratedVariable kSpdlim{{{"45+45", 0.207, 45, 45},
                                 {"35+35", 0.180, 35, 35},
                                 {"Unknown", 0.134, 99, 99},
                                 {"40+40", 0.104, 40, 40},
                                 {"25+25", 0.077, 25, 25},
                                 {"30+30", 0.062, 30, 30},
                                 {"55+55", 0.050, 55, 55},
                                 {"35+25", 0.040, 35, 25},
                                 {"50+50", 0.040, 50, 50},
                                 {"45+35", 0.040, 45, 35},
                                 {"20+20", 0.035, 20, 20},
                                 {"40+35", 0.030, 40, 35}},
                                0.5};
const GeneratedVariable kSurcon{{{"Dry", 0.832, 1, 0},
                                 {"Wet", 0.136, 2, 0},
                                 {"Snow", 0.009, 3, 0},
                                 {"Ice/frost", 0.005, 4, 0},
                                 {"Unknown", 0.011, 99, 0},
                                 {"Non-trafficway or driveway access", 0.004, 0, 0},
                                 {"Other", 0.003, 8, 0}},
                                0.9};
const GeneratedVariable kTcd{{{"Signal+Signal", 0.491, 1, 1},
                              {"No TCD+No TCD", 0.197, 0, 0},
                              {"Sign+No TCD", 0.117, 20, 0},
                              {"Sign+Sign", 0.078, 20, 20},
                              {"No TCD+Sign", 0.051, 0, 20},
                              {"Unknown+Unknown", 0.023, 99, 99},
                              {"Signal+Sign", 0.010, 1, 20},
                              {"Sign+Signal", 0.010, 20, 1},
                              {"No TCD+Signal", 0.008, 0, 1},
                              {"Signal+No TCD", 0.008, 1, 0},
                              {"Other+Other", 0.007, 97, 97}},
                             0.6};

constexpr const char* kSynthAccidentHeader[] = {"CASENUM",  "VE_TOTAL",   "VE_FORMS", "PVH_INVL", "RELJCT2_IM",
                                                "WRK_ZONE", "ALCHL_IM",   "WEIGHT",   "MAX_SEV",  "MAN_COLL",
                                                "URBANICITY", "HOUR",     "LGT_COND", "WEATHER",  "TYP_INT"};
constexpr const char* kSynthVehicleHeader[] = {
    "CASENUM",  "VEH_NO",   "BDYTYP_IM", "TOW_VEH", "BUS_USE", "SPEC_USE", "EMER_USE", "ACC_TYPE", "PCRASH1_IM",
    "PCRASH2",  "PCRASH3",  "SPEEDREL",  "DR_SF1",  "DR_SF2",  "DR_SF3",   "DR_SF4",   "VSPD_LIM", "VSURCOND",
    "VTRAFCON"};
constexpr const char* kSynthEventHeader[] = {"CASENUM", "EVENTNUM", "VNUMBER1", "SOE", "VNUMBER2"};

template <std::size_t N>
std::vector<std::string> header_of(const char* const (&names)[N]) {
    return std::vector<std::string>(std::begin(names), std::end(names));
}

std::string fmt_weight(double w) {
    // Three decimals keeps the CSV compact and stable.
    return format_double(std::round(w * 1000.0) / 1000.0);
}

int representative_code(const Alphabet& alphabet, Phase phase, const std::string& tag) {
    const auto* e = alphabet.find(phase, tag);
    if (!e) throw DataError("synthetic pattern uses unknown tag " + tag);
    return e->crss_codes.front();
}

}  // namespace

RawTables generate_synthetic(std::uint64_t seed, std::size_t n_crashes, const SyntheticConfig& config,
                             const Codebooks& books) {
    if (n_crashes == 0) throw ConfigError("synthetic crash count must be at least 1");
    const Alphabet& alphabet = *books.alphabet;
    const auto& patterns = builtin_patterns();

    std::vector<std::vector<EventToken>> pattern_tokens;
    std::vector<Category> pattern_cats;
    for (const auto& p : patterns) {
        pattern_tokens.push_back(parse_tokens(p.sequence, alphabet));
        if (!has_canonical_order(pattern_tokens.back()) ||
            pattern_tokens.back()[6].role != pattern_tokens.back()[0].role)
            throw DataError("synthetic pattern " + p.sequence + " violates the ordering rule");
        pattern_cats.push_back({p.type.c_str(), p.weight, 0, 0});
    }
    static const std::vector<std::string> kExtraSoe{"ROR", "ROL", "XF", "RLO", "XO", "CM", "XF"};
    static const long long kBodyTypes[] = {4, 14, 15, 20, 30, 34};

    RawTables raw{Table(header_of(kSynthAccidentHeader)), Table(header_of(kSynthVehicleHeader)),
                  Table(header_of(kSynthEventHeader))};
    Rng rng(derive_seed(seed, 0x5e9));

    for (std::size_t i = 0; i < n_crashes; ++i) {
        const std::string casenum = std::to_string(100001 + i);

        // Sequence pattern and noise.
        const std::size_t pi = inverse_cdf(pattern_cats, rng.uniform());
        const Stratum ps = stratum_of(pattern_cats, pi);
        std::vector<EventToken> tokens = pattern_tokens[pi];
        if (rng.uniform() < config.token_noise) {
            const std::size_t slot = rng.below(6);
            auto tags = alphabet.tags(tokens[slot].phase, tokens[slot].role);
            tokens[slot].code = tags[rng.below(tags.size())];
        }
        if (rng.uniform() < config.extra_soe) {
            const std::size_t extra = 1 + rng.below(3);
            for (std::size_t e = 0; e < extra; ++e)
                tokens.push_back(EventToken{rng.below(2) ? Role::V2 : Role::V1, Phase::Soe,
                                            kExtraSoe[rng.below(kExtraSoe.size())]});
        }
        const CrashConfig cfg = patterns[pi].config;

        // Positions; configuration J uses the 68-69 rule so vehicles may arrive swapped.
        int pos[2];
        if (cfg == CrashConfig::J) {
            pos[0] = 68;
            pos[1] = 69;
        } else {
            const auto* range = books.configs->range(cfg);
            if (!range) throw DataError("no code range for configuration");
            pos[0] = range->first;
            pos[1] = std::min(range->first + 1, range->last);
        }
        const bool has_rule = books.renumber->find(pos[0], pos[1]) != nullptr;
        const bool swap = has_rule && rng.uniform() < config.swap_probability;
        // original vehicle number of each role
        const int orig[2] = {swap ? 2 : 1, swap ? 1 : 2};

        // Attributes.
        auto draw = [&](const GeneratedVariable& var, Stratum s) {
            return inverse_cdf(var.categories, latent(rng, var.coupling, s.start, s.width));
        };
        const Stratum none{0.0, 1.0};
        const auto& maxsev = kMaxsev.categories[draw(kMaxsev, ps)];
        const auto& moc = kMoc.categories[draw(kMoc, ps)];
        const auto& speeding = kSpeeding.categories[draw(kSpeeding, ps)];
        const auto& careless = kCareless.categories[draw(kCareless, ps)];
        const auto& didnotsee = kDidNotSee.categories[draw(kDidNotSee, none)];
        const auto& reckless = kReckless.categories[draw(kReckless, none)];
        const auto& improp = kImpropCtrl.categories[draw(kImpropCtrl, none)];
        const std::size_t urb_i = draw(kUrbrur, none);
        const auto& urbrur = kUrbrur.categories[urb_i];
        const std::size_t tod_i = draw(kTod, none);
        const auto& light = kLight.categories[draw(kLight, stratum_of(kTod.categories, tod_i))];
        const std::size_t weather_i = draw(kWeather, stratum_of(kTod.categories, tod_i));
        const auto& weather = kWeather.categories[weather_i];
        const auto& typint = kTypint.categories[draw(kTypint, ps)];
        const auto& spdlim = kSpdlim.categories[draw(kSpdlim, stratum_of(kUrbrur.categories, urb_i))];
        const auto& surcon = kSurcon.categories[draw(kSurcon, stratum_of(kWeather.categories, weather_i))];
        const auto& tcd = kTcd.categories[draw(kTcd, ps)];

        long long hour;
        if (tod_i == 0) {
            hour = 6 + static_cast<long long>(rng.below(12));
        } else {
            const long long h = static_cast<long long>(rng.below(12));
            hour = h < 6 ? h : h + 12;
        }
        const double weight = config.min_weight + (config.max_weight - config.min_weight) * rng.uniform();

        raw.accident.add_row({casenum, "2", "2", "0", rng.uniform() < 0.8 ? "2" : "3", "0", "2",
                              fmt_weight(weight), std::to_string(maxsev.code_v1), std::to_string(moc.code_v1),
                              std::to_string(urbrur.code_v1), std::to_string(hour), std::to_string(light.code_v1),
                              std::to_string(weather.code_v1), std::to_string(typint.code_v1)});

        // Vehicle rows in original numbering order.
        const Role lead = tokens[0].role;
        for (int original = 1; original <= 2; ++original) {
            const int role_idx = orig[0] == original ? 0 : 1;
            const Role role = role_idx == 0 ? Role::V1 : Role::V2;
            const std::size_t base = role == lead ? 0 : 3;
            auto side = [&](const Category& c) { return std::to_string(role_idx == 0 ? c.code_v1 : c.code_v2); };
            // Driver-level factors share four slots; each flag takes its own slot.
            std::string sf[4] = {"0", "0", "0", "0"};
            const Category* flags[] = {&careless, &didnotsee, &reckless, &improp};
            for (int f = 0; f < 4; ++f) sf[f] = side(*flags[f]);
            raw.vehicle.add_row({casenum, std::to_string(original),
                                 std::to_string(kBodyTypes[rng.below(std::size(kBodyTypes))]), "0", "0", "0", "0",
                                 std::to_string(pos[role_idx]),
                                 std::to_string(representative_code(alphabet, Phase::Pcrash1, tokens[base].code)),
                                 std::to_string(representative_code(alphabet, Phase::Pcrash2, tokens[base + 1].code)),
                                 std::to_string(representative_code(alphabet, Phase::Pcrash3, tokens[base + 2].code)),
                                 side(speeding), sf[0], sf[1], sf[2], sf[3], side(spdlim),
                                 std::to_string(surcon.code_v1), side(tcd)});
        }

        for (std::size_t e = 6; e < tokens.size(); ++e) {
            const int role_idx = tokens[e].role == Role::V1 ? 0 : 1;
            const int veh = orig[role_idx];
            const std::string& tag = tokens[e].code;
            std::string other = "5555";
            if (tag == "XV") other = std::to_string(orig[1 - role_idx]);
            else if (tag == "XF") other = "9999";
            raw.event.add_row({casenum, std::to_string(e - 5), std::to_string(veh),
                               std::to_string(representative_code(alphabet, Phase::Soe, tag)), other});
        }
    }
    return raw;
}

// -- persistence --------------------------------------------------------------

void write_sequences_jsonl(std::ostream& out, const std::vector<CrashSequence>& seqs) {
    for (const auto& s : seqs) {
        nlohmann::ordered_json j;
        j["crash_id"] = s.crash_id;
        j["sequence"] = render(s);
        j["weight"] = s.weight;
        j["crash_config"] = s.crash_config ? std::string(1, to_char(*s.crash_config)) : std::string();
        j["attributes"] = s.attributes;
        out << j.dump() << '\n';
    }
}

std::vector<CrashSequence> read_sequences_jsonl(std::istream& in, const Alphabet& alphabet) {
    std::vector<CrashSequence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            CrashSequence s = parse_sequence(j.at("sequence").get<std::string>(), alphabet);
            s.crash_id = j.at("crash_id").get<std::string>();
            s.weight = j.at("weight").get<double>();
            if (!(s.weight > 0.0)) throw DataError("non-positive weight");
            const auto cfg = j.value("crash_config", std::string{});
            if (!cfg.empty()) {
                s.crash_config = config_from_char(cfg[0]);
                if (!s.crash_config || cfg.size() != 1) throw DataError("bad crash_config '" + cfg + "'");
            }
            if (j.contains("attributes"))
                s.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw DataError("sequences.jsonl line " + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("sequences.jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_sequences_text(std::ostream& out, const std::vector<CrashSequence>& seqs) {
    for (const auto& s : seqs) out << render(s) << '\n';
}

}  // namespace crashscen
