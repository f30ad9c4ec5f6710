#pragma once

#include <array>
#include <compare>
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

enum class Phase : std::uint8_t { Pcrash1 = 0, Pcrash2 = 1, Pcrash3 = 2, Soe = 3 };
enum class Role : std::uint8_t { V1 = 0, V2 = 1 };

inline constexpr std::array<Phase, 4> kPhases{Phase::Pcrash1, Phase::Pcrash2, Phase::Pcrash3, Phase::Soe};
/// Consolidated categories per phase: PCRASH1, PCRASH2, PCRASH3, SOE.
inline constexpr std::array<std::size_t, 4> kPhaseCardinality{14, 29, 11, 17};
inline constexpr std::size_t kAlphabetSize = 71;

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view name);
constexpr char role_digit(Role r) { return r == Role::V1 ? '1' : '2'; }
constexpr Role other_role(Role r) { return r == Role::V1 ? Role::V2 : Role::V1; }

/// CRSS crash configuration letters for two-vehicle crash types.
enum class CrashConfig : char { D = 'D', E = 'E', F = 'F', G = 'G', H = 'H', I = 'I', J = 'J', K = 'K', L = 'L', M = 'M' };
inline constexpr std::array<CrashConfig, 10> kCrashConfigs{CrashConfig::D, CrashConfig::E, CrashConfig::F,
                                                           CrashConfig::G, CrashConfig::H, CrashConfig::I,
                                                           CrashConfig::J, CrashConfig::K, CrashConfig::L,
                                                           CrashConfig::M};
constexpr char to_char(CrashConfig c) { return static_cast<char>(c); }
std::optional<CrashConfig> config_from_char(char c);

struct EventToken {
    Role role = Role::V1;
    Phase phase = Phase::Soe;
    std::string code;

    /// Role digit followed by the code tag, e.g. "1ST".
    std::string rendered() const;
    friend auto operator<=>(const EventToken&, const EventToken&) = default;
};

struct AlphabetEntry {
    Phase phase;
    std::string tag;
    std::vector<int> crss_codes;
    std::string description;
    bool allows_v1 = true;
    bool allows_v2 = true;

    bool allows(Role r) const { return r == Role::V1 ? allows_v1 : allows_v2; }
};

/// The consolidated event alphabet: CRSS codes per phase collapsed onto short
/// tags. Loaded from CSV (phase, code_tag, crss_codes, description); a tag
/// carrying a leading role digit ("1AIA") exists for that role only.
class Alphabet {
public:
    /// Per-phase cardinalities are checked against kPhaseCardinality unless
    /// `check_cardinality` is false.
    static Alphabet from_csv(std::string_view text, const std::string& source = "<alphabet>",
                             bool check_cardinality = true);
    static Alphabet load(const std::filesystem::path& path, bool check_cardinality = true);
    /// The alphabet shipped in data/alphabet.csv, compiled in.
    static const Alphabet& builtin();

    const std::vector<AlphabetEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t size(Phase phase) const;

    const AlphabetEntry* find(Phase phase, std::string_view tag) const;
    /// Row containing `raw_code`; throws UnknownCode.
    const AlphabetEntry& entry_for_code(Phase phase, int raw_code) const;
    bool allows(Phase phase, Role role, std::string_view tag) const;
    /// Tags usable by `role` in `phase`, in file order.
    std::vector<std::string> tags(Phase phase, Role role) const;

private:
    std::vector<AlphabetEntry> entries_;
    std::map<std::pair<Phase, int>, std::size_t> by_code_;
    std::map<std::pair<Phase, std::string>, std::size_t, std::less<>> by_tag_;
};

/// Throws UnknownCode when no row for `phase` lists `raw_code`, or when the
/// matching row is single-sided and excludes `role`.
EventToken encode_event(const Alphabet& alphabet, Phase phase, Role role, int raw_code);

// -- vehicle renumbering ------------------------------------------------------

enum class RoleAssignment : std::uint8_t { V1, V2, Keep };

struct RenumberRule {
    std::string crash_type_code;  // e.g. "68-69"
    int position_a = 0;
    RoleAssignment role_a = RoleAssignment::Keep;
    int position_b = 0;
    RoleAssignment role_b = RoleAssignment::Keep;
};

/// Crash-type rules mapping each vehicle's initial position/trajectory code
/// onto a role. Rules are matched on the unordered position pair.
class RenumberTable {
public:
    static RenumberTable from_csv(std::string_view text, const std::string& source = "<renumber>");
    static RenumberTable load(const std::filesystem::path& path);
    static const RenumberTable& builtin();

    /// Throws ConfigError when the rule maps both positions to one role.
    void add(RenumberRule rule);
    const RenumberRule* find(int position_1, int position_2) const;
    const std::vector<RenumberRule>& rules() const { return rules_; }

private:
    std::vector<RenumberRule> rules_;
};

struct Renumbering {
    Role vehicle1 = Role::V1;  // new role of the vehicle originally numbered 1
    Role vehicle2 = Role::V2;  // new role of the vehicle originally numbered 2
    bool rule_found = true;

    bool swapped() const { return vehicle1 == Role::V2; }
    /// Role of an original vehicle number (1 or 2); nullopt otherwise.
    std::optional<Role> role_of(long long original_vehicle) const;
};

/// Throws MissingRule when the position pair has no rule.
Renumbering renumber_vehicles(const RenumberTable& table, int position_vehicle1, int position_vehicle2);
/// Same, but falls back to the original numbering with rule_found = false.
Renumbering renumber_or_keep(const RenumberTable& table, int position_vehicle1, int position_vehicle2);

// -- sequences ----------------------------------------------------------------

struct CrashSequence {
    std::string crash_id;
    std::vector<EventToken> tokens;
    double weight = 1.0;
    std::optional<CrashConfig> crash_config;
    std::map<std::string, std::string> attributes;
};

using PcrashTriple = std::array<EventToken, 3>;

/// One SOE record after consolidation; `role` is empty when the record's
/// vehicle cannot be resolved to V1/V2 (or two vehicles share the first slot).
struct SoeEvent {
    std::optional<Role> role;
    std::string code;
};

/// Orders PCRASH triples by the role of the first SOE event, followed by all
/// SOE events. Throws EmptySOE, AmbiguousFirstEvent, or DataError for
/// malformed triples/tokens.
CrashSequence assemble_sequence(const PcrashTriple& v1, const PcrashTriple& v2, std::span<const SoeEvent> soe,
                                double weight, std::optional<CrashConfig> config,
                                const Alphabet& alphabet = Alphabet::builtin());

/// True when tokens satisfy the ordering invariant: one vehicle's
/// PCRASH1..3, the other vehicle's PCRASH1..3, then at least one SOE token.
bool has_canonical_order(std::span<const EventToken> tokens);

std::string render(std::span<const EventToken> tokens);
std::string render(const CrashSequence& seq);

/// Hyphen-joined rendered tokens; phases are assigned by position. Throws
/// ParseError carrying the character offset of the first bad token.
std::vector<EventToken> parse_tokens(std::string_view text, const Alphabet& alphabet = Alphabet::builtin());
/// parse_tokens wrapped into a CrashSequence with weight 1 and no config.
CrashSequence parse_sequence(std::string_view text, const Alphabet& alphabet = Alphabet::builtin());

}  // namespace crashscen
