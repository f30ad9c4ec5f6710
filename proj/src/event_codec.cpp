#include "crashscen/event_codec.hpp"

#include <algorithm>
#include <cctype>

#include "crashscen/csv.hpp"
#include "crashscen/embedded_data.hpp"
#include "crashscen/error.hpp"

namespace crashscen {

std::string_view to_string(Phase phase) {
    switch (phase) {
        case Phase::Pcrash1: return "PCRASH1";
        case Phase::Pcrash2: return "PCRASH2";
        case Phase::Pcrash3: return "PCRASH3";
        case Phase::Soe: return "SOE";
    }
    return "?";
}

Phase phase_from_string(std::string_view name) {
    for (Phase p : kPhases)
        if (to_string(p) == name) return p;
    throw DataError("unknown phase '" + std::string(name) + "'");
}

std::optional<CrashConfig> config_from_char(char c) {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (c < 'D' || c > 'M') return std::nullopt;
    return static_cast<CrashConfig>(c);
}

std::string EventToken::rendered() const {
    std::string s(1, role_digit(role));
    s += code;
    return s;
}

namespace {

bool is_tag(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

}  // namespace

// -- Alphabet -----------------------------------------------------------------

Alphabet Alphabet::from_csv(std::string_view text, const std::string& source, bool check_cardinality) {
    const Table t = Table::parse(text, source);
    const auto c_phase = t.column("phase");
    const auto c_tag = t.column("code_tag");
    const auto c_codes = t.column("crss_codes");
    const auto c_desc = t.column("description");

    Alphabet a;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        AlphabetEntry e;
        e.phase = phase_from_string(trim(t.at(r, c_phase)));
        std::string tag = trim(t.at(r, c_tag));
        if (!tag.empty() && (tag[0] == '1' || tag[0] == '2')) {
            e.allows_v1 = tag[0] == '1';
            e.allows_v2 = tag[0] == '2';
            tag.erase(0, 1);
        }
        if (!is_tag(tag)) throw DataError(source + ": bad code tag '" + t.at(r, c_tag) + "'");
        e.tag = tag;
        for (const auto& part : split(t.at(r, c_codes), ';')) {
            auto v = parse_int(part);
            if (!v) throw DataError(source + ": bad CRSS code '" + part + "' for tag " + tag);
            e.crss_codes.push_back(static_cast<int>(*v));
        }
        e.description = t.at(r, c_desc);

        const std::size_t idx = a.entries_.size();
        if (!a.by_tag_.emplace(std::make_pair(e.phase, e.tag), idx).second)
            throw DataError(source + ": duplicate tag " + e.tag + " in " + std::string(to_string(e.phase)));
        for (int code : e.crss_codes) {
            if (!a.by_code_.emplace(std::make_pair(e.phase, code), idx).second)
                throw DataError(source + ": CRSS code " + std::to_string(code) + " listed twice in " +
                                std::string(to_string(e.phase)));
        }
        a.entries_.push_back(std::move(e));
    }

    if (check_cardinality) {
        for (Phase p : kPhases) {
            const auto n = a.size(p);
            const auto want = kPhaseCardinality[static_cast<std::size_t>(p)];
            if (n != want)
                throw DataError(source + ": " + std::string(to_string(p)) + " has " + std::to_string(n) +
                                " categories, expected " + std::to_string(want));
        }
    }
    return a;
}

Alphabet Alphabet::load(const std::filesystem::path& path, bool check_cardinality) {
    return from_csv(Table::read(path).to_string(), path.string(), check_cardinality);
}

const Alphabet& Alphabet::builtin() {
    static const Alphabet a = from_csv(embedded::alphabet_csv(), "data/alphabet.csv");
    return a;
}

std::size_t Alphabet::size(Phase phase) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [&](const AlphabetEntry& e) { return e.phase == phase; }));
}

const AlphabetEntry* Alphabet::find(Phase phase, std::string_view tag) const {
    auto it = by_tag_.find(std::make_pair(phase, std::string(tag)));
    return it == by_tag_.end() ? nullptr : &entries_[it->second];
}

const AlphabetEntry& Alphabet::entry_for_code(Phase phase, int raw_code) const {
    auto it = by_code_.find({phase, raw_code});
    if (it == by_code_.end()) throw UnknownCode(std::string(to_string(phase)), raw_code);
    return entries_[it->second];
}

bool Alphabet::allows(Phase phase, Role role, std::string_view tag) const {
    const auto* e = find(phase, tag);
    return e && e->allows(role);
}

std::vector<std::string> Alphabet::tags(Phase phase, Role role) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (e.phase == phase && e.allows(role)) out.push_back(e.tag);
    return out;
}

EventToken encode_event(const Alphabet& alphabet, Phase phase, Role role, int raw_code) {
    const auto& e = alphabet.entry_for_code(phase, raw_code);
    if (!e.allows(role)) throw UnknownCode(std::string(to_string(phase)), raw_code);
    return EventToken{role, phase, e.tag};
}

// -- renumbering --------------------------------------------------------------

namespace {

RoleAssignment assignment_from_string(const std::string& s, const std::string& source) {
    const std::string v = trim(s);
    if (v == "V1" || v == "1") return RoleAssignment::V1;
    if (v == "V2" || v == "2") return RoleAssignment::V2;
    if (v == "Keep" || v == "keep" || v == "KEEP") return RoleAssignment::Keep;
    throw DataError(source + ": bad role '" + s + "' (expected V1, V2 or Keep)");
}

}  // namespace

RenumberTable RenumberTable::from_csv(std::string_view text, const std::string& source) {
    const Table t = Table::parse(text, source);
    const auto c_code = t.column("crash_type_code");
    const auto c_pa = t.column("position_a");
    const auto c_ra = t.column("role_a");
    const auto c_pb = t.column("position_b");
    const auto c_rb = t.column("role_b");
    RenumberTable table;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        RenumberRule rule;
        rule.crash_type_code = trim(t.at(r, c_code));
        auto pa = parse_int(t.at(r, c_pa));
        auto pb = parse_int(t.at(r, c_pb));
        if (!pa || !pb) throw DataError(source + ": bad position in rule " + rule.crash_type_code);
        rule.position_a = static_cast<int>(*pa);
        rule.position_b = static_cast<int>(*pb);
        rule.role_a = assignment_from_string(t.at(r, c_ra), source);
        rule.role_b = assignment_from_string(t.at(r, c_rb), source);
        table.add(std::move(rule));
    }
    return table;
}

RenumberTable RenumberTable::load(const std::filesystem::path& path) {
    return from_csv(Table::read(path).to_string(), path.string());
}

const RenumberTable& RenumberTable::builtin() {
    static const RenumberTable t = from_csv(embedded::renumber_rules_csv(), "data/renumber_rules.csv");
    return t;
}

void RenumberTable::add(RenumberRule rule) {
    if (rule.role_a != RoleAssignment::Keep && rule.role_a == rule.role_b)
        throw ConfigError("renumber rule " + rule.crash_type_code + " maps both vehicles to one role");
    if (rule.position_a == rule.position_b &&
        (rule.role_a != RoleAssignment::Keep || rule.role_b != RoleAssignment::Keep))
        throw ConfigError("renumber rule " + rule.crash_type_code +
                          " assigns roles to two vehicles with identical positions");
    if (find(rule.position_a, rule.position_b))
        throw ConfigError("duplicate renumber rule for " + rule.crash_type_code);
    rules_.push_back(std::move(rule));
}

const RenumberRule* RenumberTable::find(int position_1, int position_2) const {
    for (const auto& r : rules_) {
        if ((r.position_a == position_1 && r.position_b == position_2) ||
            (r.position_a == position_2 && r.position_b == position_1))
            return &r;
    }
    return nullptr;
}

std::optional<Role> Renumbering::role_of(long long original_vehicle) const {
    if (original_vehicle == 1) return vehicle1;
    if (original_vehicle == 2) return vehicle2;
    return std::nullopt;
}

namespace {

Renumbering apply_rule(const RenumberRule& rule, int position_vehicle1) {
    RoleAssignment ra = rule.role_a;
    RoleAssignment rb = rule.role_b;
    // One explicit side determines the other.
    if (ra == RoleAssignment::Keep && rb != RoleAssignment::Keep)
        ra = rb == RoleAssignment::V1 ? RoleAssignment::V2 : RoleAssignment::V1;
    if (rb == RoleAssignment::Keep && ra != RoleAssignment::Keep)
        rb = ra == RoleAssignment::V1 ? RoleAssignment::V2 : RoleAssignment::V1;
    Renumbering out;
    if (ra == RoleAssignment::Keep) return out;
    const RoleAssignment v1 = position_vehicle1 == rule.position_a ? ra : rb;
    out.vehicle1 = v1 == RoleAssignment::V1 ? Role::V1 : Role::V2;
    out.vehicle2 = other_role(out.vehicle1);
    return out;
}

}  // namespace

Renumbering renumber_vehicles(const RenumberTable& table, int position_vehicle1, int position_vehicle2) {
    const auto* rule = table.find(position_vehicle1, position_vehicle2);
    if (!rule) throw MissingRule(std::to_string(position_vehicle1) + "-" + std::to_string(position_vehicle2));
    return apply_rule(*rule, position_vehicle1);
}

Renumbering renumber_or_keep(const RenumberTable& table, int position_vehicle1, int position_vehicle2) {
    const auto* rule = table.find(position_vehicle1, position_vehicle2);
    if (!rule) {
        Renumbering keep;
        keep.rule_found = false;
        return keep;
    }
    return apply_rule(*rule, position_vehicle1);
}

// -- sequences ----------------------------------------------------------------

namespace {

void check_triple(const PcrashTriple& t, Role role, const Alphabet& alphabet) {
    static constexpr std::array<Phase, 3> phases{Phase::Pcrash1, Phase::Pcrash2, Phase::Pcrash3};
    for (std::size_t i = 0; i < 3; ++i) {
        if (t[i].role != role || t[i].phase != phases[i])
            throw DataError("PCRASH triple for V" + std::string(1, role_digit(role)) + " is malformed at slot " +
                            std::to_string(i + 1));
        if (!alphabet.allows(t[i].phase, role, t[i].code))
            throw DataError("token " + t[i].rendered() + " is not in the " + std::string(to_string(t[i].phase)) +
                            " alphabet");
    }
}

}  // namespace

CrashSequence assemble_sequence(const PcrashTriple& v1, const PcrashTriple& v2, std::span<const SoeEvent> soe,
                                double weight, std::optional<CrashConfig> config, const Alphabet& alphabet) {
    if (soe.empty()) throw EmptySOE();
    if (!soe.front().role) throw AmbiguousFirstEvent();
    if (!(weight > 0.0)) throw DataError("sampling weight must be positive");
    check_triple(v1, Role::V1, alphabet);
    check_triple(v2, Role::V2, alphabet);

    CrashSequence seq;
    seq.weight = weight;
    seq.crash_config = config;
    seq.tokens.reserve(6 + soe.size());
    const bool v1_first = *soe.front().role == Role::V1;
    const PcrashTriple& first = v1_first ? v1 : v2;
    const PcrashTriple& second = v1_first ? v2 : v1;
    seq.tokens.insert(seq.tokens.end(), first.begin(), first.end());
    seq.tokens.insert(seq.tokens.end(), second.begin(), second.end());
    for (std::size_t i = 0; i < soe.size(); ++i) {
        if (!soe[i].role) throw DataError("SOE event " + std::to_string(i + 1) + " has no vehicle role");
        if (!alphabet.allows(Phase::Soe, *soe[i].role, soe[i].code))
            throw DataError("SOE tag " + std::string(1, role_digit(*soe[i].role)) + soe[i].code +
                            " is not in the alphabet");
        seq.tokens.push_back(EventToken{*soe[i].role, Phase::Soe, soe[i].code});
    }
    return seq;
}

bool has_canonical_order(std::span<const EventToken> tokens) {
    if (tokens.size() < 7) return false;
    static constexpr std::array<Phase, 3> phases{Phase::Pcrash1, Phase::Pcrash2, Phase::Pcrash3};
    const Role lead = tokens[0].role;
    for (std::size_t i = 0; i < 6; ++i) {
        const Role want = i < 3 ? lead : other_role(lead);
        if (tokens[i].role != want || tokens[i].phase != phases[i % 3]) return false;
    }
    return std::all_of(tokens.begin() + 6, tokens.end(), [](const EventToken& t) { return t.phase == Phase::Soe; });
}

std::string render(std::span<const EventToken> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back('-');
        out.push_back(role_digit(tokens[i].role));
        out += tokens[i].code;
    }
    return out;
}

std::string render(const CrashSequence& seq) { return render(seq.tokens); }

std::vector<EventToken> parse_tokens(std::string_view text, const Alphabet& alphabet) {
    if (text.empty()) throw ParseError("empty sequence", 0);
    static constexpr std::array<Phase, 3> phases{Phase::Pcrash1, Phase::Pcrash2, Phase::Pcrash3};
    std::vector<EventToken> tokens;
    std::size_t offset = 0;
    std::size_t index = 0;
    for (;;) {
        const auto dash = text.find('-', offset);
        const auto piece = text.substr(offset, dash == std::string_view::npos ? std::string_view::npos : dash - offset);
        if (piece.size() < 2 || (piece[0] != '1' && piece[0] != '2') || !is_tag(piece.substr(1)))
            throw ParseError("malformed token '" + std::string(piece) + "'", offset);

        EventToken tok;
        tok.role = piece[0] == '1' ? Role::V1 : Role::V2;
        tok.code = std::string(piece.substr(1));
        tok.phase = index < 6 ? phases[index % 3] : Phase::Soe;
        if (index >= 1 && index < 6) {
            const Role lead = tokens.front().role;
            const Role want = index < 3 ? lead : other_role(lead);
            if (tok.role != want)
                throw ParseError("token '" + std::string(piece) + "' has the wrong vehicle for its PCRASH slot",
                                 offset);
        }
        if (!alphabet.allows(tok.phase, tok.role, tok.code))
            throw ParseError("token '" + std::string(piece) + "' is not in the " + std::string(to_string(tok.phase)) +
                                 " alphabet",
                             offset);
        tokens.push_back(std::move(tok));
        ++index;
        if (dash == std::string_view::npos) break;
        offset = dash + 1;
    }
    if (tokens.size() < 7)
        throw ParseError("sequence has " + std::to_string(tokens.size()) + " tokens, need at least 7", text.size());
    return tokens;
}

CrashSequence parse_sequence(std::string_view text, const Alphabet& alphabet) {
    CrashSequence seq;
    seq.tokens = parse_tokens(text, alphabet);
    return seq;
}

}  // namespace crashscen
