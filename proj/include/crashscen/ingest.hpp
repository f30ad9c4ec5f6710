#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "crashscen/csv.hpp"
#include "crashscen/event_codec.hpp"

namespace crashscen {

/// CRSS-shaped crash, vehicle and event tables keyed by crash id.
struct RawTables {
    Table accident;
    Table vehicle;
    Table event;

    static RawTables read(const std::filesystem::path& accident_csv, const std::filesystem::path& vehicle_csv,
                          const std::filesystem::path& event_csv);
    /// Writes accident.csv, vehicle.csv and event.csv into `dir`.
    void write(const std::filesystem::path& dir) const;
};

struct IngestOptions {
    std::string id_column = "CASENUM";
    /// Sampling weight column; every record weighs 1.0 when the column is absent.
    std::string weight_column = "WEIGHT";
    std::string vehicle_number_column = "VEH_NO";
    std::string position_column = "ACC_TYPE";
    std::string pcrash1_column = "PCRASH1_IM";
    std::string pcrash2_column = "PCRASH2";
    std::string pcrash3_column = "PCRASH3";
    std::string event_number_column = "EVENTNUM";
    std::string event_vehicle_column = "VNUMBER1";
    std::string soe_column = "SOE";
};

/// Subsetting predicates for intersection two-vehicle passenger crashes.
/// Vehicle-level predicates must hold for both vehicles.
struct SubsetReport {
    std::size_t input_crashes = 0;
    std::size_t retained = 0;
    /// Crashes failing each criterion (a crash may fail several).
    std::map<std::string, std::size_t> failures;
};

/// Names of the columns the subsetting criteria read.
const std::vector<std::string>& subset_crash_columns();
const std::vector<std::string>& subset_vehicle_columns();

/// Throws MissingColumn.
RawTables subset(const RawTables& raw, const IngestOptions& options = {}, SubsetReport* report = nullptr);

// -- attributes ---------------------------------------------------------------

enum class AttributeScope { Crash, VehiclePair, VehicleFlagPair, VehiclePairTopN, VehicleFirst };

struct CodeRange {
    long long from = 0;
    long long to = 0;
    std::string label;
};

struct AttributeVariable {
    std::string name;
    AttributeScope scope = AttributeScope::Crash;
    std::vector<std::string> columns;
    /// Crash / VehicleFirst scopes: ordered level set.
    std::vector<std::string> levels;
    /// VehiclePair scope: per-side levels; pair levels are "a+b".
    std::vector<std::string> side_levels;
    std::map<long long, std::string> codes;
    std::vector<CodeRange> ranges;
    /// Label for valid codes missing from `codes`; unmapped codes become the
    /// unknown label (with a warning) when unset.
    std::optional<std::string> fallback;
    std::set<long long> flag_codes;
    std::size_t top_n = 6;
    std::set<long long> unknown_codes;
    std::string other_label = "Other";
    std::string note;
};

struct AttributeSchema {
    std::string unknown_label = "Unknown";
    std::vector<AttributeVariable> variables;

    static AttributeSchema from_json(std::string_view text);
    static AttributeSchema load(const std::filesystem::path& path);
    static const AttributeSchema& builtin();

    const AttributeVariable* find(std::string_view name) const;
};

struct DerivedAttributes {
    /// crash id -> variable -> level
    std::map<std::string, std::map<std::string, std::string>> values;
    /// variable -> ordered levels (schema order; data-driven for top-N variables)
    std::map<std::string, std::vector<std::string>> levels;
    std::vector<std::string> warnings;
};

/// Derives outcome, human-factor and environment variables per crash. Paired
/// variables are labelled "V1side+V2side" after renumbering. Unmapped values
/// become the unknown label and are reported in `warnings`.
DerivedAttributes derive_attributes(const RawTables& raw, const AttributeSchema& schema,
                                    const RenumberTable& renumber = RenumberTable::builtin(),
                                    const IngestOptions& options = {});

// -- crash configurations -----------------------------------------------------

/// Crash-type code ranges (ACC_TYPE 20-99) grouped into configurations D-M.
class CrashConfigTable {
public:
    struct Range {
        CrashConfig config;
        int first;
        int last;
        std::string description;
    };
    static CrashConfigTable from_csv(std::string_view text, const std::string& source = "<configs>");
    static const CrashConfigTable& builtin();

    std::optional<CrashConfig> config_for(int crash_type) const;
    const Range* range(CrashConfig c) const;
    const std::vector<Range>& ranges() const { return ranges_; }

private:
    std::vector<Range> ranges_;
};

// -- sequence building --------------------------------------------------------

struct IngestResult {
    std::vector<CrashSequence> sequences;
    std::vector<std::string> warnings;
    std::size_t dropped = 0;
    std::size_t missing_rules = 0;
    std::size_t swapped = 0;
};

struct Codebooks {
    const Alphabet* alphabet = &Alphabet::builtin();
    const RenumberTable* renumber = &RenumberTable::builtin();
    const CrashConfigTable* configs = &CrashConfigTable::builtin();
    const AttributeSchema* schema = &AttributeSchema::builtin();
};

/// Renumbers, encodes and assembles one weighted CrashSequence per crash of an
/// already-subset table set; crashes that cannot be encoded are dropped with a
/// warning. Output is ordered by crash id as it appears in the accident table.
IngestResult build_sequences(const RawTables& subsetted, const DerivedAttributes& attributes,
                             const Codebooks& books = {}, const IngestOptions& options = {});

double weighted_count(const std::vector<CrashSequence>& seqs);

// -- synthetic data -----------------------------------------------------------

struct SyntheticConfig {
    /// Probability of replacing one PCRASH token with another tag of its phase.
    double token_noise = 0.12;
    /// Probability of appending post-collision SOE events.
    double extra_soe = 0.075;
    /// Probability of swapping the original vehicle numbers when a rule applies.
    double swap_probability = 0.5;
    double min_weight = 20.0;
    double max_weight = 280.0;
};

/// Representative sequence patterns the generator draws from.
struct SequencePattern {
    std::string type;
    CrashConfig config;
    std::string sequence;
    double weight;
};
std::vector<SequencePattern> load_patterns(std::string_view csv_text);
const std::vector<SequencePattern>& builtin_patterns();

/// Deterministic CRSS-shaped tables whose attribute marginals follow the
/// reference outcome / ODD shares. Every generated crash passes subset().
RawTables generate_synthetic(std::uint64_t seed, std::size_t n_crashes, const SyntheticConfig& config = {},
                             const Codebooks& books = {});

// -- persistence --------------------------------------------------------------

void write_sequences_jsonl(std::ostream& out, const std::vector<CrashSequence>& seqs);
std::vector<CrashSequence> read_sequences_jsonl(std::istream& in, const Alphabet& alphabet = Alphabet::builtin());
/// Sequence text format: one hyphen-joined sequence per line.
void write_sequences_text(std::ostream& out, const std::vector<CrashSequence>& seqs);

}  // namespace crashscen
