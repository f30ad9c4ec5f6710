#include "crashscen/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "crashscen/csv.hpp"
#include "crashscen/error.hpp"
#include "crashscen/rng.hpp"
#include "crashscen/seqdist.hpp"

namespace crashscen {

namespace {

constexpr int kFree = -1;

/// Fills `a` in topological order; evidence nodes are clamped and contribute
/// their conditional probability to the returned weight.
double draw_particle(const BayesNet& net, Rng& rng, const std::vector<int>& evidence, std::vector<std::uint16_t>& a) {
    double w = 1.0;
    for (std::size_t v : net.order()) {
        const Cpt& t = net.cpts()[v];
        const auto row = t.row(net.row_index(v, a));
        if (evidence[v] != kFree) {
            a[v] = static_cast<std::uint16_t>(evidence[v]);
            w *= row[a[v]];
        } else {
            a[v] = static_cast<std::uint16_t>(rng.categorical(row));
        }
    }
    return w;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::vector<std::uint16_t> sample_forward(const BayesNet& net, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<int> none(net.size(), kFree);
    std::vector<std::uint16_t> out(n * net.size());
    std::vector<std::uint16_t> a(net.size());
    for (std::size_t i = 0; i < n; ++i) {
        draw_particle(net, rng, none, a);
        std::copy(a.begin(), a.end(), out.begin() + static_cast<std::ptrdiff_t>(i * net.size()));
    }
    return out;
}

QueryResult query(const BayesNet& net, const Query& q, unsigned threads) {
    if (q.targets.empty() || q.targets.size() > 2) throw ConfigError("query " + q.name + ": one or two targets required");
    if (q.replications == 0 || q.samples == 0) throw ConfigError("query " + q.name + ": R and N must be positive");
    if (!(q.scale > 0.0)) throw ConfigError("query " + q.name + ": scale must be positive");
    std::vector<std::size_t> targets;
    for (const auto& t : q.targets) {
        targets.push_back(net.index(t));
        if (q.evidence.count(t)) throw ConfigError("query " + q.name + ": target " + t + " is also evidence");
    }
    if (targets.size() == 2 && targets[0] == targets[1]) throw ConfigError("query " + q.name + ": duplicate target");
    std::vector<int> evidence(net.size(), kFree);
    for (const auto& [var, level] : q.evidence) {
        const std::size_t v = net.index(var);
        evidence[v] = static_cast<int>(net.variables()[v].level_index(level));
    }

    QueryResult res;
    res.query = q;
    std::size_t cells = 1;
    for (std::size_t t : targets) {
        res.target_levels.push_back(net.variables()[t].levels);
        cells *= net.variables()[t].levels.size();
    }
    const std::size_t stride = targets.size() == 2 ? net.variables()[targets[1]].levels.size() : 1;

    const std::size_t R = q.replications;
    std::vector<double> cond(R * cells, 0.0);  // P(cell | e) per replication
    std::vector<double> pe(R, 0.0), ess(R, 0.0);
    std::vector<char> valid(R, 0);

    auto run = [&](std::size_t r) {
        Rng rng(derive_seed(q.seed, r));
        std::vector<std::uint16_t> a(net.size());
        double* c = cond.data() + r * cells;
        double sw = 0.0, sw2 = 0.0;
        for (std::size_t i = 0; i < q.samples; ++i) {
            const double w = draw_particle(net, rng, evidence, a);
            if (w <= 0.0) continue;
            std::size_t cell = a[targets[0]];
            if (targets.size() == 2) cell = cell * stride + a[targets[1]];
            c[cell] += w;
            sw += w;
            sw2 += w * w;
        }
        if (sw <= 0.0) return;
        for (std::size_t k = 0; k < cells; ++k) c[k] /= sw;
        pe[r] = sw / static_cast<double>(q.samples);
        ess[r] = sw * sw / sw2;
        valid[r] = 1;
    };
    const unsigned nt = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::min<std::size_t>(R, 1u << 16)));
    if (nt <= 1) {
        for (std::size_t r = 0; r < R; ++r) run(r);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < nt; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t r = t; r < R; r += nt) run(r);
            });
    }

    std::vector<std::size_t> used;
    for (std::size_t r = 0; r < R; ++r)
        if (valid[r]) used.push_back(r);
    res.replications_used = used.size();
    res.replications_dropped = R - used.size();
    if (used.empty()) throw ZeroEvidenceProbability();

    const double m = static_cast<double>(used.size());
    for (std::size_t r : used) {
        res.evidence_probability += pe[r] / m;
        res.mean_ess += ess[r] / m;
    }
    auto mean_sd = [&](auto value) {
        double mean = 0.0;
        for (std::size_t r : used) mean += value(r);
        mean /= m;
        double var = 0.0;
        for (std::size_t r : used) var += (value(r) - mean) * (value(r) - mean);
        return std::make_pair(mean, used.size() > 1 ? std::sqrt(var / (m - 1.0)) : 0.0);
    };
    for (std::size_t k = 0; k < cells; ++k) {
        QueryCell cell;
        if (targets.size() == 2) {
            cell.levels = {res.target_levels[0][k / stride], res.target_levels[1][k % stride]};
        } else {
            cell.levels = {res.target_levels[0][k]};
        }
        auto [pm, psd] = mean_sd([&](std::size_t r) { return cond[r * cells + k]; });
        cell.probability = pm;
        cell.conditional_mean = pm * q.scale;
        cell.conditional_sd = psd * q.scale;
        auto [jm, jsd] = mean_sd([&](std::size_t r) { return cond[r * cells + k] * pe[r] * q.scale; });
        cell.joint_mean = jm;
        cell.joint_sd = jsd;
        res.cells.push_back(std::move(cell));
    }
    return res;
}

std::vector<Query> queries_from_json(std::string_view text, const Query& defaults) {
    std::vector<Query> out;
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_array()) throw ConfigError("query file must hold a JSON list");
        std::set<std::string> names;
        for (std::size_t i = 0; i < j.size(); ++i) {
            const auto& e = j[i];
            Query q = defaults;
            q.name = e.value("name", "query" + std::to_string(i + 1));
            if (!names.insert(q.name).second) throw ConfigError("duplicate query name " + q.name);
            q.evidence = e.value("evidence", std::map<std::string, std::string>{});
            q.targets = e.at("targets").get<std::vector<std::string>>();
            q.replications = e.value("R", defaults.replications);
            q.samples = e.value("N", defaults.samples);
            q.scale = e.value("scale", defaults.scale);
            q.seed = e.value("seed", derive_seed(defaults.seed, i));
            out.push_back(std::move(q));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("query file: ") + e.what());
    }
    return out;
}

// -- reporting ----------------------------------------------------------------

std::string query_to_csv(const QueryResult& r) {
    std::ostringstream out;
    const auto& t = r.query.targets;
    if (t.size() == 1) {
        out << csv_escape(t[0]) << ",mean_count,sd_count,probability,conditional_mean,conditional_sd\n";
        for (const auto& c : r.cells)
            out << csv_escape(c.levels[0]) << ',' << fixed(c.joint_mean, 3) << ',' << fixed(c.joint_sd, 3) << ','
                << fixed(c.probability, 6) << ',' << fixed(c.conditional_mean, 3) << ',' << fixed(c.conditional_sd, 3)
                << '\n';
        return out.str();
    }
    out << csv_escape(t[0] + "\\" + t[1]);
    for (const auto& l : r.target_levels[1]) out << ',' << csv_escape(l);
    out << '\n';
    const std::size_t stride = r.target_levels[1].size();
    for (std::size_t i = 0; i < r.target_levels[0].size(); ++i) {
        out << csv_escape(r.target_levels[0][i]);
        for (std::size_t j = 0; j < stride; ++j) out << ',' << fixed(r.cells[i * stride + j].joint_mean, 3);
        out << '\n';
    }
    return out.str();
}

std::string query_to_long_csv(const QueryResult& r) {
    std::ostringstream out;
    for (const auto& t : r.query.targets) out << csv_escape(t) << ',';
    out << "joint_mean,joint_sd,conditional_mean,conditional_sd,probability\n";
    for (const auto& c : r.cells) {
        for (const auto& l : c.levels) out << csv_escape(l) << ',';
        out << format_double(c.joint_mean) << ',' << format_double(c.joint_sd) << ','
            << format_double(c.conditional_mean) << ',' << format_double(c.conditional_sd) << ','
            << format_double(c.probability) << '\n';
    }
    return out.str();
}

std::string query_to_json(const QueryResult& r) {
    nlohmann::ordered_json j;
    j["name"] = r.query.name;
    j["evidence"] = r.query.evidence;
    j["targets"] = r.query.targets;
    j["R"] = r.query.replications;
    j["N"] = r.query.samples;
    j["scale"] = r.query.scale;
    j["seed"] = r.query.seed;
    j["evidence_probability"] = r.evidence_probability;
    j["mean_ess"] = r.mean_ess;
    j["replications_used"] = r.replications_used;
    j["replications_dropped"] = r.replications_dropped;
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : r.cells)
        j["cells"].push_back({{"levels", c.levels},
                              {"joint_mean", c.joint_mean},
                              {"joint_sd", c.joint_sd},
                              {"conditional_mean", c.conditional_mean},
                              {"conditional_sd", c.conditional_sd},
                              {"probability", c.probability}});
    return j.dump(1) + "\n";
}

QueryResult query_result_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        QueryResult r;
        r.query.name = j.at("name").get<std::string>();
        r.query.evidence = j.at("evidence").get<std::map<std::string, std::string>>();
        r.query.targets = j.at("targets").get<std::vector<std::string>>();
        r.query.replications = j.at("R").get<std::size_t>();
        r.query.samples = j.at("N").get<std::size_t>();
        r.query.scale = j.at("scale").get<double>();
        r.query.seed = j.at("seed").get<std::uint64_t>();
        r.evidence_probability = j.at("evidence_probability").get<double>();
        r.mean_ess = j.at("mean_ess").get<double>();
        r.replications_used = j.at("replications_used").get<std::size_t>();
        r.replications_dropped = j.at("replications_dropped").get<std::size_t>();
        r.target_levels.resize(r.query.targets.size());
        for (const auto& c : j.at("cells")) {
            QueryCell cell;
            cell.levels = c.at("levels").get<std::vector<std::string>>();
            if (cell.levels.size() != r.query.targets.size()) throw DataError("query result: malformed cell");
            cell.joint_mean = c.at("joint_mean").get<double>();
            cell.joint_sd = c.at("joint_sd").get<double>();
            cell.conditional_mean = c.at("conditional_mean").get<double>();
            cell.conditional_sd = c.at("conditional_sd").get<double>();
            cell.probability = c.at("probability").get<double>();
            for (std::size_t t = 0; t < cell.levels.size(); ++t) {
                auto& lv = r.target_levels[t];
                if (std::find(lv.begin(), lv.end(), cell.levels[t]) == lv.end()) lv.push_back(cell.levels[t]);
            }
            r.cells.push_back(std::move(cell));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("query result: ") + e.what());
    }
}

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string query_to_svg(const QueryResult& r) {
    if (r.query.targets.size() != 1) return {};
    const double bar_area = 420.0, label_w = 160.0, row_h = 18.0;
    double max_v = 0.0;
    for (const auto& c : r.cells) max_v = std::max(max_v, c.joint_mean);
    const double height = 40.0 + row_h * static_cast<double>(r.cells.size());
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(label_w + bar_area + 90, 0) << "\" height=\""
        << fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "  <text x=\"4\" y=\"16\" font-size=\"13\">" << xml_escape(r.query.name) << ": mean count by "
        << xml_escape(r.query.targets[0]) << "</text>\n";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& c = r.cells[i];
        const double y = 28.0 + row_h * static_cast<double>(i);
        const double w = max_v > 0 ? bar_area * c.joint_mean / max_v : 0.0;
        out << "  <text x=\"" << fixed(label_w - 6, 0) << "\" y=\"" << fixed(y + 12, 1) << "\" text-anchor=\"end\">"
            << xml_escape(c.levels[0]) << "</text>\n";
        out << "  <rect x=\"" << fixed(label_w, 0) << "\" y=\"" << fixed(y + 2, 1) << "\" width=\"" << fixed(w, 2)
            << "\" height=\"" << fixed(row_h - 4, 1) << "\" fill=\"#4a78a8\"/>\n";
        out << "  <text x=\"" << fixed(label_w + w + 4, 2) << "\" y=\"" << fixed(y + 12, 1) << "\">"
            << fixed(c.joint_mean, 1) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string side_phrase(const std::string& var, const std::string& side) {
    if (var == "tcd") {
        if (side == "Signal") return "signal control";
        if (side == "Sign") return "sign control";
        if (side == "No TCD") return "no traffic control";
        if (side == "Unknown") return "unknown traffic control";
        return "other traffic control";
    }
    if (side == "Y") return var;
    if (side == "N") return "no " + var;
    if (side == "U") return "unknown " + var;
    return var + " " + side;
}

/// Plain-language fragment for one variable level.
std::string phrase(const std::string& var, const std::string& level) {
    if (var == "typint") {
        if (level == "Unknown") return "an intersection of unknown type";
        if (level == "Other") return "an intersection of other type";
        if (level == "Roundabout") return "a roundabout";
        return "a " + lower(level) + " intersection";
    }
    if (var == "tod") return level == "Day" ? "at daytime" : level == "Night" ? "at night" : "at an unknown time";
    if (var == "seqtype") return "sequence type " + level;
    if (var == "maxsev") return "maximum injury " + lower(level);
    if (var == "moc") return lower(level) + " collision";
    if (var == "urbrur") return level == "Unknown" ? "unknown urbanicity" : "in a " + lower(level) + " area";
    if (var == "light") return "lighting " + lower(level);
    if (var == "weather") return "weather " + lower(level);
    if (var == "surcon") return "road surface " + lower(level);
    if (var == "spdlim") return "speed limits " + level;
    const auto plus = level.find('+');
    if (plus != std::string::npos) {
        const std::string a = level.substr(0, plus), b = level.substr(plus + 1);
        if (a == b) return side_phrase(var, a) + " for both vehicles";
        return side_phrase(var, a) + " for V1 and " + side_phrase(var, b) + " for V2";
    }
    return var + " " + level;
}

}  // namespace

std::vector<std::string> scenario_lines(const QueryResult& r, std::size_t top) {
    std::vector<std::size_t> order(r.cells.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.cells[a].joint_mean > r.cells[b].joint_mean; });
    std::string given;
    for (const auto& [var, level] : r.query.evidence) given += (given.empty() ? "" : ", ") + phrase(var, level);
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < order.size() && i < top; ++i) {
        const auto& c = r.cells[order[i]];
        std::string body;
        for (std::size_t t = 0; t < c.levels.size(); ++t)
            body += (t ? " with " : "") + phrase(r.query.targets[t], c.levels[t]);
        std::string line = body;
        if (!given.empty()) line += " (given " + given + ")";
        line += ": mean count " + fixed(c.joint_mean, 1) + ", " + fixed(100.0 * c.probability, 1) + "% of matching crashes";
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string scenario_report(const std::vector<QueryResult>& results) {
    std::ostringstream out;
    out << "# Scenario report\n\n";
    if (results.empty()) {
        out << "No queries.\n";
        return out.str();
    }
    for (const auto& r : results) {
        out << "## " << r.query.name << "\n\n";
        out << "- evidence:";
        if (r.query.evidence.empty()) out << " none";
        for (const auto& [var, level] : r.query.evidence) out << ' ' << var << " = " << level << ';';
        out << "\n- targets: ";
        for (std::size_t t = 0; t < r.query.targets.size(); ++t) out << (t ? ", " : "") << r.query.targets[t];
        out << "\n- replications: " << r.replications_used << " used, " << r.replications_dropped
            << " dropped; samples per replication: " << r.query.samples << "\n";
        out << "- estimated P(evidence): " << fixed(r.evidence_probability, 6)
            << "; mean effective sample size: " << fixed(r.mean_ess, 1) << "\n\n";

        if (r.query.targets.size() == 1) {
            out << "| " << r.query.targets[0] << " | mean count | sd | probability |\n|---|---:|---:|---:|\n";
            for (const auto& c : r.cells)
                out << "| " << c.levels[0] << " | " << fixed(c.joint_mean, 2) << " | " << fixed(c.joint_sd, 2) << " | "
                    << fixed(c.probability, 4) << " |\n";
        } else {
            out << "| " << r.query.targets[0] << " \\ " << r.query.targets[1] << " |";
            for (const auto& l : r.target_levels[1]) out << ' ' << l << " |";
            out << "\n|---|";
            for (std::size_t j = 0; j < r.target_levels[1].size(); ++j) out << "---:|";
            out << '\n';
            const std::size_t stride = r.target_levels[1].size();
            for (std::size_t i = 0; i < r.target_levels[0].size(); ++i) {
                out << "| " << r.target_levels[0][i] << " |";
                for (std::size_t j = 0; j < stride; ++j) out << ' ' << fixed(r.cells[i * stride + j].joint_mean, 2) << " |";
                out << '\n';
            }
        }
        out << "\nScenarios:\n\n";
        for (const auto& line : scenario_lines(r)) out << "- " << line << '\n';
        out << '\n';
    }
    return out.str();
}

}  // namespace crashscen
