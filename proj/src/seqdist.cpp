#include "crashscen/seqdist.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <thread>

#include "crashscen/csv.hpp"
#include "crashscen/error.hpp"

namespace crashscen {

void CostScheme::validate() const {
    if (!(indel > 0.0) || !std::isfinite(indel)) throw ConfigError("indel cost must be positive");
    if (!(substitution > 0.0) || !std::isfinite(substitution))
        throw ConfigError("substitution cost must be positive");
}

double align_cost(std::string_view a, std::string_view b, const CostScheme& costs) {
    return align_cost(std::span<const char>(a.data(), a.size()), std::span<const char>(b.data(), b.size()), costs);
}

double align_cost(const std::vector<EventToken>& a, const std::vector<EventToken>& b, const CostScheme& costs) {
    return align_cost(std::span<const EventToken>(a), std::span<const EventToken>(b), costs);
}

DissimMatrix::DissimMatrix(std::vector<std::string> ids) : ids_(std::move(ids)) {
    const std::size_t n = ids_.size();
    values_.assign(n * (n > 0 ? n - 1 : 0) / 2, 0.0);
}

unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::vector<int>> symbolize(std::span<const std::vector<EventToken>> seqs) {
    std::map<EventToken, int> symbols;
    std::vector<std::vector<int>> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) {
        std::vector<int> v;
        v.reserve(s.size());
        for (const auto& t : s) v.push_back(symbols.try_emplace(t, static_cast<int>(symbols.size())).first->second);
        out.push_back(std::move(v));
    }
    return out;
}

DissimMatrix distance_matrix(std::span<const std::vector<int>> seqs, std::vector<std::string> ids,
                             const CostScheme& costs, unsigned threads) {
    costs.validate();
    if (ids.size() != seqs.size()) throw ConfigError("distance_matrix: ids and sequences differ in length");

    // Collapse duplicates; distances are computed between distinct sequences.
    std::map<std::vector<int>, std::size_t> uniq_index;
    std::vector<std::size_t> slot(seqs.size());
    std::vector<const std::vector<int>*> uniq;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        auto [it, fresh] = uniq_index.try_emplace(seqs[i], uniq.size());
        if (fresh) uniq.push_back(&seqs[i]);
        slot[i] = it->second;
    }
    const std::size_t u = uniq.size();
    std::vector<double> ud(u * (u > 0 ? u - 1 : 0) / 2, 0.0);
    auto uoff = [u](std::size_t i, std::size_t j) { return i * (2 * u - i - 1) / 2 + (j - i - 1); };

    const unsigned nt = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max<std::size_t>(u, 1)));
    auto work = [&](unsigned t) {
        for (std::size_t i = t; i < u; i += nt)
            for (std::size_t j = i + 1; j < u; ++j)
                ud[uoff(i, j)] = align_cost(std::span<const int>(*uniq[i]), std::span<const int>(*uniq[j]), costs);
    };
    if (nt <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < nt; ++t) pool.emplace_back(work, t);
    }

    DissimMatrix m(std::move(ids));
    const std::size_t n = seqs.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::size_t a = slot[i], b = slot[j];
            m.values()[m.offset(i, j)] = a == b ? 0.0 : ud[a < b ? uoff(a, b) : uoff(b, a)];
        }
    return m;
}

DissimMatrix distance_matrix(std::span<const CrashSequence> seqs, const CostScheme& costs, unsigned threads) {
    std::vector<std::vector<EventToken>> toks;
    std::vector<std::string> ids;
    for (const auto& s : seqs) {
        toks.push_back(s.tokens);
        ids.push_back(s.crash_id);
    }
    auto sym = symbolize(toks);
    return distance_matrix(sym, std::move(ids), costs, threads);
}

// -- persistence --------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'C', 'S', 'D', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::ostream& out, T v) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <class T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
        throw DataError("distance matrix file is truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
}

}  // namespace

void DissimMatrix::write_binary(std::ostream& out) const {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, ids_.size());
    for (const auto& id : ids_) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    for (double v : values_) put_le<double>(out, v);
}

DissimMatrix DissimMatrix::read_binary(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("not a binary distance matrix");
    if (get_le<std::uint32_t>(in) != kVersion) throw DataError("unsupported distance matrix version");
    const auto n = get_le<std::uint64_t>(in);
    std::vector<std::string> ids(n);
    for (auto& id : ids) {
        const auto len = get_le<std::uint32_t>(in);
        id.resize(len);
        if (!in.read(id.data(), len)) throw DataError("distance matrix file is truncated");
    }
    DissimMatrix m(std::move(ids));
    for (double& v : m.values_) v = get_le<double>(in);
    return m;
}

void DissimMatrix::write_csv(std::ostream& out) const {
    out << "n," << ids_.size() << '\n' << "ids";
    for (const auto& id : ids_) out << ',' << csv_escape(id);
    out << '\n' << "i,j,value\n";
    const std::size_t n = ids_.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) out << i << ',' << j << ',' << format_double(values_[offset(i, j)]) << '\n';
}

DissimMatrix DissimMatrix::read_csv(std::istream& in) {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto rec = parse_records(text, "<matrix>");
    if (rec.size() < 3 || rec[0].size() != 2 || rec[0][0] != "n") throw DataError("distance matrix CSV: bad header");
    const auto n = parse_int(rec[0][1]);
    if (!n || *n < 0 || rec[1].empty() || rec[1][0] != "ids" || rec[1].size() != static_cast<std::size_t>(*n) + 1)
        throw DataError("distance matrix CSV: bad ids line");
    if (rec[2] != std::vector<std::string>{"i", "j", "value"})
        throw DataError("distance matrix CSV: missing i,j,value header");
    DissimMatrix m(std::vector<std::string>(rec[1].begin() + 1, rec[1].end()));
    std::vector<char> seen(m.values_.size(), 0);
    for (std::size_t r = 3; r < rec.size(); ++r) {
        const auto& row = rec[r];
        if (row.size() != 3) throw DataError("distance matrix CSV: bad row " + std::to_string(r + 1));
        auto i = parse_int(row[0]);
        auto j = parse_int(row[1]);
        auto v = parse_double(row[2]);
        if (!i || !j || !v || *i < 0 || *j <= *i || *j >= *n)
            throw DataError("distance matrix CSV: bad row " + std::to_string(r + 1));
        const auto off = m.offset(static_cast<std::size_t>(*i), static_cast<std::size_t>(*j));
        m.values_[off] = *v;
        seen[off] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw DataError("distance matrix CSV: missing entries");
    return m;
}

void DissimMatrix::save(const std::filesystem::path& path, bool binary) const {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw ConfigError("cannot write " + path.string());
    if (binary)
        write_binary(out);
    else
        write_csv(out);
}

DissimMatrix DissimMatrix::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    in.clear();
    in.seekg(0);
    return magic == kMagic ? read_binary(in) : read_csv(in);
}

}  // namespace crashscen
