#include <doctest.h>

#include <sstream>

#include "crashscen/error.hpp"
#include "crashscen/rng.hpp"
#include "crashscen/seqdist.hpp"
#include "oracles.hpp"

using namespace crashscen;

TEST_CASE("alignment cost anchors") {
    CHECK(align_cost("ABCD", "ACB", CostScheme{1, 1}) == 2.0);
    CHECK(align_cost("ABCD", "ACB", CostScheme{1, 3}) == 3.0);
    CHECK(align_cost("", "", CostScheme{}) == 0.0);
    CHECK(align_cost("abc", "", CostScheme{2, 1}) == 6.0);
    CHECK(align_cost("kitten", "sitting") == 3.0);
}

TEST_CASE("token-level alignment") {
    const auto a = parse_tokens("1ST-1OIS-1N-2S-2OIS-2NA-1XV");
    const auto b = parse_tokens("1ST-1OIS-1B-2S-2OIS-2NA-1XV");
    const auto c = parse_tokens("1ST-1OIS-1N-2S-2OIS-2NA-1XV-1ROR-1XF");
    CHECK(align_cost(a, b) == 1.0);
    CHECK(align_cost(a, c) == 2.0);
    // Role is part of the symbol.
    const auto d = parse_tokens("2ST-2OIS-2N-1S-1OIS-1NA-2XV");
    CHECK(align_cost(a, d) == 7.0);
}

TEST_CASE("metric properties on random strings") {
    Rng rng(12);
    auto rs = [&] {
        std::string s;
        const auto n = rng.below(9);
        for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + rng.below(4)));
        return s;
    };
    for (int t = 0; t < 300; ++t) {
        const std::string x = rs(), y = rs(), z = rs();
        const CostScheme c{1.0, 1.0 + static_cast<double>(rng.below(2))};
        CHECK(align_cost(x, y, c) == align_cost(y, x, c));
        CHECK(align_cost(x, x, c) == 0.0);
        CHECK(align_cost(x, z, c) <= align_cost(x, y, c) + align_cost(y, z, c) + 1e-12);
        CHECK(align_cost(x, y, c) == oracle::edit_distance(x, y, c.indel, c.substitution));
    }
}

TEST_CASE("cost scheme validation") {
    CHECK_THROWS_AS((CostScheme{0, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((CostScheme{1, -1}.validate()), ConfigError);
    CHECK(CostScheme{1, 3}.metric_warning());
    CHECK(!CostScheme{1, 2}.metric_warning());
}

namespace {
std::vector<std::vector<int>> random_sequences(Rng& rng, std::size_t n) {
    std::vector<std::vector<int>> seqs;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && rng.below(4) == 0) {
            seqs.push_back(seqs[rng.below(i)]);
            continue;
        }
        std::vector<int> s(1 + rng.below(9));
        for (auto& x : s) x = static_cast<int>(rng.below(5));
        seqs.push_back(s);
    }
    return seqs;
}
}  // namespace

TEST_CASE("distance matrix matches pairwise alignment and is thread independent") {
    Rng rng(13);
    const auto seqs = random_sequences(rng, 60);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < seqs.size(); ++i) ids.push_back("id" + std::to_string(i));
    const CostScheme c{1.0, 1.5};
    const DissimMatrix one = distance_matrix(seqs, ids, c, 1);
    const DissimMatrix many = distance_matrix(seqs, ids, c, 4);
    CHECK(one == many);
    for (std::size_t i = 0; i < seqs.size(); ++i)
        for (std::size_t j = 0; j < seqs.size(); ++j)
            CHECK(one(i, j) == align_cost(std::span<const int>(seqs[i]), std::span<const int>(seqs[j]), c));
}

TEST_CASE("matrix serialisation round trips") {
    Rng rng(14);
    const auto seqs = random_sequences(rng, 12);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < seqs.size(); ++i) ids.push_back(i % 3 ? "s" + std::to_string(i) : "a,\"b\"" + std::to_string(i));
    const DissimMatrix m = distance_matrix(seqs, ids, CostScheme{1.0, 0.7}, 2);
    std::stringstream csv, bin;
    m.write_csv(csv);
    m.write_binary(bin);
    CHECK(DissimMatrix::read_csv(csv) == m);
    CHECK(DissimMatrix::read_binary(bin) == m);

    const auto dir = std::filesystem::temp_directory_path() / "crashscen_seqdist_test";
    std::filesystem::create_directories(dir);
    m.save(dir / "m.bin", true);
    m.save(dir / "m.csv", false);
    CHECK(DissimMatrix::load(dir / "m.bin") == m);
    CHECK(DissimMatrix::load(dir / "m.csv") == m);
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt matrix files are rejected") {
    std::stringstream bad("CSDM garbage");
    CHECK_THROWS_AS(DissimMatrix::read_binary(bad), DataError);
    std::stringstream csv("n,3\nids,a,b\n");
    CHECK_THROWS_AS(DissimMatrix::read_csv(csv), DataError);
}

TEST_CASE("crash-sequence matrix uses crash ids") {
    std::vector<CrashSequence> seqs{parse_sequence("1ST-1OIS-1N-2S-2OIS-2NA-1XV"),
                                    parse_sequence("1ST-1OIS-1B-2S-2OIS-2NA-1XV")};
    seqs[0].crash_id = "c1";
    seqs[1].crash_id = "c2";
    const DissimMatrix m = distance_matrix(seqs);
    CHECK(m.ids() == std::vector<std::string>{"c1", "c2"});
    CHECK(m(0, 1) == 1.0);
}
