#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crashscen/event_codec.hpp"

namespace crashscen {

/// Fixed indel and substitution costs.
struct CostScheme {
    double indel = 1.0;
    double substitution = 1.0;

    /// Throws ConfigError unless both costs are positive and finite.
    void validate() const;
    /// Substitutions dearer than a delete+insert pair can break the triangle
    /// inequality.
    bool metric_warning() const { return substitution > 2.0 * indel; }
};

/// Minimum edit-script cost between two sequences (insert, delete, substitute).
template <class T>
double align_cost(std::span<const T> a, std::span<const T> b, const CostScheme& costs) {
    const std::size_t m = b.size();
    std::vector<double> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = costs.indel * static_cast<double>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = costs.indel * static_cast<double>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const double sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0.0 : costs.substitution);
            cur[j] = std::min({prev[j] + costs.indel, cur[j - 1] + costs.indel, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double align_cost(std::string_view a, std::string_view b, const CostScheme& costs = {});
double align_cost(const std::vector<EventToken>& a, const std::vector<EventToken>& b, const CostScheme& costs = {});

/// Symmetric dissimilarities stored as the condensed upper triangle (i < j).
class DissimMatrix {
public:
    DissimMatrix() = default;
    explicit DissimMatrix(std::vector<std::string> ids);

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    double operator()(std::size_t i, std::size_t j) const {
        if (i == j) return 0.0;
        if (i > j) std::swap(i, j);
        return values_[offset(i, j)];
    }
    void set(std::size_t i, std::size_t j, double v) {
        if (i > j) std::swap(i, j);
        values_[offset(i, j)] = v;
    }
    std::size_t offset(std::size_t i, std::size_t j) const {
        const std::size_t n = ids_.size();
        return i * (2 * n - i - 1) / 2 + (j - i - 1);
    }

    void write_csv(std::ostream& out) const;
    void write_binary(std::ostream& out) const;
    static DissimMatrix read_csv(std::istream& in);
    static DissimMatrix read_binary(std::istream& in);
    /// Binary when `binary`, CSV otherwise.
    void save(const std::filesystem::path& path, bool binary) const;
    /// Detects the encoding from the leading bytes.
    static DissimMatrix load(const std::filesystem::path& path);

    friend bool operator==(const DissimMatrix&, const DissimMatrix&) = default;

private:
    std::vector<std::string> ids_;
    std::vector<double> values_;
};

/// Token sequences mapped onto dense integer symbols for fast alignment.
std::vector<std::vector<int>> symbolize(std::span<const std::vector<EventToken>> seqs);

/// Pairwise matrix over integer-symbol sequences. Identical sequences are
/// aligned once. `threads` = 0 uses the hardware concurrency.
DissimMatrix distance_matrix(std::span<const std::vector<int>> seqs, std::vector<std::string> ids,
                             const CostScheme& costs = {}, unsigned threads = 0);
/// Ids are the crash ids.
DissimMatrix distance_matrix(std::span<const CrashSequence> seqs, const CostScheme& costs = {}, unsigned threads = 0);

unsigned resolve_threads(unsigned requested);

}  // namespace crashscen
