#include <doctest.h>

#include <limits>
#include <numeric>

#include "crashscen/cluster.hpp"
#include "crashscen/error.hpp"
#include "crashscen/rng.hpp"
#include "oracles.hpp"

using namespace crashscen;

namespace {

std::vector<double> random_weights(Rng& rng, std::size_t n) {
    std::vector<double> w(n);
    for (auto& x : w) x = 0.2 + 2.0 * rng.uniform();
    return w;
}

}  // namespace

TEST_CASE("k = 1 gives the weighted 1-median") {
    Rng rng(21);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + rng.below(15);
        const auto d = oracle::random_matrix(rng, n, false);
        const auto w = random_weights(rng, n);
        const Partition p = k_medoids(d, w, 1);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t m = 0; m < n; ++m) {
            double c = 0.0;
            for (std::size_t i = 0; i < n; ++i) c += w[i] * d(i, m);
            if (c < best) {
                best = c;
                arg = m;
            }
        }
        CHECK(p.medoids[0] == arg);
        CHECK(p.total_cost == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("local search ends where no single swap improves") {
    Rng rng(22);
    KMedoidsOptions local;
    local.exhaustive_limit = 0;
    for (int t = 0; t < 40; ++t) {
        const std::size_t n = 6 + rng.below(25);
        const std::size_t k = 2 + rng.below(4);
        const auto d = oracle::random_matrix(rng, n, t % 2 == 0);
        const auto w = random_weights(rng, n);
        const Partition p = k_medoids(d, w, k, 0, local);
        CHECK(p.total_cost == doctest::Approx(medoid_cost(d, w, p.medoids)).epsilon(1e-12));
        for (std::size_t slot = 0; slot < k; ++slot)
            for (std::size_t h = 0; h < n; ++h) {
                if (std::find(p.medoids.begin(), p.medoids.end(), h) != p.medoids.end()) continue;
                auto m = p.medoids;
                m[slot] = h;
                CHECK(medoid_cost(d, w, m) >= p.total_cost - 1e-9);
            }
        // Assignment is to the nearest medoid.
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < k; ++c) CHECK(d(i, p.medoids[p.assignment[i]]) <= d(i, p.medoids[c]));
    }
}

TEST_CASE("enumeration and restarts never do worse than plain local search") {
    Rng rng(23);
    KMedoidsOptions local, restarts;
    local.exhaustive_limit = 0;
    restarts.exhaustive_limit = 0;
    restarts.restarts = 5;
    for (int t = 0; t < 40; ++t) {
        const std::size_t n = 4 + rng.below(6);
        const std::size_t k = 1 + rng.below(3);
        const auto d = oracle::random_matrix(rng, n, true);
        const auto w = random_weights(rng, n);
        const double best = oracle::best_medoid_cost(d, w, k);
        const double a = k_medoids(d, w, k, t, local).total_cost;
        const double b = k_medoids(d, w, k, t, restarts).total_cost;
        const double c = k_medoids(d, w, k, t).total_cost;
        CHECK(b <= a + 1e-12);
        CHECK(c == doctest::Approx(best).epsilon(1e-12));
        CHECK(best <= b + 1e-12);
    }
}

TEST_CASE("k-medoids argument checks") {
    Rng rng(24);
    const auto d = oracle::random_matrix(rng, 4, false);
    std::vector<double> w(4, 1.0);
    CHECK_THROWS_AS(k_medoids(d, w, 5), KTooLarge);
    CHECK_THROWS_AS(k_medoids(d, w, 0), ConfigError);
    w[2] = 0.0;
    CHECK_THROWS_AS(k_medoids(d, w, 2), ConfigError);
}

TEST_CASE("quality indices match the reference and are weight-scale invariant") {
    Rng rng(25);
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 5 + rng.below(20);
        const auto d = oracle::random_matrix(rng, n, t % 2 == 0);
        const auto w = random_weights(rng, n);
        const Partition p = k_medoids(d, w, 2 + rng.below(3));
        const auto q = quality_indices(d, w, p.assignment);
        const auto r = oracle::quality(d, w, p.assignment);
        CHECK(q.asw_w == doctest::Approx(r.asw_w).epsilon(1e-9));
        CHECK(q.hg == doctest::Approx(r.hg).epsilon(1e-9));
        CHECK(q.pbc == doctest::Approx(r.pbc).epsilon(1e-9));
        CHECK(q.hc == doctest::Approx(r.hc).epsilon(1e-9));
        std::vector<double> w3 = w;
        for (auto& x : w3) x *= 3.0;
        const auto s = quality_indices(d, w3, p.assignment);
        CHECK(s.asw_w == doctest::Approx(q.asw_w).epsilon(1e-9));
        CHECK(s.hg == doctest::Approx(q.hg).epsilon(1e-9));
        CHECK(s.pbc == doctest::Approx(q.pbc).epsilon(1e-9));
        CHECK(s.hc == doctest::Approx(q.hc).epsilon(1e-9));
    }
}

TEST_CASE("unit weights give the classical silhouette") {
    // Two tight pairs far apart: a = 1, b = 10 for every point.
    DissimMatrix d({"a", "b", "c", "d"});
    d.set(0, 1, 1);
    d.set(2, 3, 1);
    d.set(0, 2, 10);
    d.set(0, 3, 10);
    d.set(1, 2, 10);
    d.set(1, 3, 10);
    std::vector<double> w(4, 1.0);
    const std::vector<std::size_t> cl{0, 0, 1, 1};
    const auto q = quality_indices(d, w, cl);
    CHECK(q.asw_w == doctest::Approx(0.9));
    CHECK(q.hg == doctest::Approx(1.0));
    CHECK(q.hc == doctest::Approx(0.0));
    CHECK(q.pbc == doctest::Approx(1.0));
    // A singleton cluster contributes s = 0.
    const std::vector<std::size_t> single{0, 0, 1, 2};
    const auto s = quality_indices(d, w, single);
    CHECK(s.asw_w == doctest::Approx(0.45));
}

TEST_CASE("sweep over 2..25 gives 24 standardised rows") {
    Rng rng(26);
    const auto d = oracle::random_matrix(rng, 40, false);
    const auto w = random_weights(rng, 40);
    const QualityReport rep = k_sweep(d, w, 2, 25, 1, 2);
    REQUIRE(rep.rows.size() == 24);
    double mean = 0.0, var = 0.0;
    for (const auto& r : rep.rows) mean += r.z.asw_w;
    mean /= 24;
    for (const auto& r : rep.rows) var += (r.z.asw_w - mean) * (r.z.asw_w - mean);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var / 24 == doctest::Approx(1.0));
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].k == i + 2);
        CHECK(rep.rows[i].partition.k == i + 2);
    }
    // Thread count does not change results.
    const QualityReport one = k_sweep(d, w, 2, 25, 1, 1);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) CHECK(one.rows[i].raw.asw_w == rep.rows[i].raw.asw_w);
    const std::size_t k = choose_k(rep);
    CHECK(k >= 2);
    CHECK(k <= 25);
}

TEST_CASE("sweep clamps to n - 1 and flags degenerate indices") {
    DissimMatrix d({"a", "b", "c", "d"});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) d.set(i, j, 1.0);
    std::vector<double> w(4, 1.0);
    const QualityReport rep = k_sweep(d, w, 2, 25);
    CHECK(rep.rows.size() == 2);
    CHECK(rep.degenerate);
    CHECK(k_sweep(DissimMatrix({"a", "b"}), std::vector<double>{1, 1}, 2, 5).rows.empty());
}

TEST_CASE("adjusted Rand index") {
    Rng rng(27);
    const std::vector<std::size_t> a{0, 0, 1, 1, 2, 2};
    const std::vector<std::size_t> b{2, 2, 0, 0, 1, 1};
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(1.0));
    for (int t = 0; t < 50; ++t) {
        std::vector<std::size_t> x(30), y(30);
        for (auto& v : x) v = rng.below(4);
        for (auto& v : y) v = rng.below(3);
        CHECK(adjusted_rand_index(x, y) == doctest::Approx(oracle::ari(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("grouping collapses identical sequences per configuration") {
    std::vector<CrashSequence> seqs;
    auto add = [&](const char* s, double w, CrashConfig c) {
        CrashSequence q = parse_sequence(s);
        q.weight = w;
        q.crash_config = c;
        seqs.push_back(q);
    };
    add("1ST-1OIS-1N-2S-2OIS-2NA-1XV", 2.0, CrashConfig::D);
    add("1L-1L-1N-2ST-2OEO-2N-1XV", 1.0, CrashConfig::J);
    add("1ST-1OIS-1N-2S-2OIS-2NA-1XV", 3.0, CrashConfig::D);
    add("1ST-1OIS-1B-2S-2OIS-2NA-1XV", 1.5, CrashConfig::D);
    seqs.push_back(parse_sequence("1ST-1OIS-1B-2S-2OIS-2NA-1XV"));
    const auto groups = group_sequences(seqs);
    REQUIRE(groups.size() == 2);
    const auto& d = groups.at(CrashConfig::D);
    CHECK(d.sequences == std::vector<std::string>{"1ST-1OIS-1N-2S-2OIS-2NA-1XV", "1ST-1OIS-1B-2S-2OIS-2NA-1XV"});
    CHECK(d.weights == std::vector<double>{5.0, 1.5});
    CHECK(d.counts == std::vector<std::size_t>{2, 1});
}

TEST_CASE("types are labelled by medoid order") {
    std::vector<CrashSequence> seqs;
    const char* pats[] = {"1ST-1OIS-1N-2S-2OIS-2NA-1XV", "1ST-1OIS-1B-2S-2OIS-2NA-1XV", "1L-1L-1N-2ST-2OEO-2N-1XV",
                          "1L-1L-1NA-2ST-2OEO-2N-1XV", "1R-1R-1N-2ST-2OES-2N-1XV"};
    for (int i = 0; i < 5; ++i) {
        CrashSequence q = parse_sequence(pats[i]);
        q.weight = 1.0 + i;
        q.crash_config = CrashConfig::K;
        q.crash_id = std::to_string(i);
        seqs.push_back(q);
    }
    const auto out = cluster_by_config(seqs, {{CrashConfig::K, 2}});
    const ConfigTypes& k = out.at(CrashConfig::K);
    CHECK(k.labels == std::vector<std::string>{"k1", "k2"});
    CHECK(k.partition.medoids[0] < k.partition.medoids[1]);
    CHECK(k.total_weight == doctest::Approx(15.0));
    CHECK(k.cluster_weight[0] + k.cluster_weight[1] == doctest::Approx(15.0));

    const auto small = cluster_by_config(std::span<const CrashSequence>(seqs.data(), 1), {{CrashConfig::K, 3}});
    CHECK(small.at(CrashConfig::K).too_small);
    CHECK(small.at(CrashConfig::K).labels == std::vector<std::string>{"k1"});
}

TEST_CASE("default types per configuration") {
    std::size_t total = 0;
    for (const auto& [c, k] : default_types_per_config()) total += k;
    CHECK(total == 55);
    CHECK(default_types_per_config().at(CrashConfig::D) == 12);
    CHECK(default_types_per_config().at(CrashConfig::K) == 9);
}
