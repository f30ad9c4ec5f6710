#include <doctest.h>

#include <cmath>

#include "crashscen/error.hpp"
#include "crashscen/inference.hpp"
#include "crashscen/rng.hpp"
#include "oracles.hpp"

using namespace crashscen;

namespace {

BayesNet two_node(double p_b_given_a0, double p_b_given_a1) {
    std::vector<Variable> vars{{"A", {"a0", "a1"}}, {"B", {"b0", "b1"}}};
    Dag g(2);
    g.add_arc(0, 1);
    std::vector<Cpt> cpts{{0, {}, 2, {0.3, 0.7}, {}},
                          {1, {0}, 2, {1 - p_b_given_a0, p_b_given_a0, 1 - p_b_given_a1, p_b_given_a1}, {}}};
    return BayesNet(vars, g, cpts);
}

}  // namespace

TEST_CASE("likelihood weighting matches Bayes rule on two nodes") {
    const BayesNet net = two_node(0.2, 0.6);
    Query q;
    q.evidence = {{"B", "b1"}};
    q.targets = {"A"};
    q.samples = 20000;
    q.replications = 20;
    q.scale = 1000.0;
    q.seed = 5;
    const QueryResult r = query(net, q);
    const double pe = 0.3 * 0.2 + 0.7 * 0.6;
    const double post_a0 = 0.3 * 0.2 / pe;
    CHECK(r.cells[0].probability == doctest::Approx(post_a0).epsilon(0.02));
    CHECK(r.evidence_probability == doctest::Approx(pe).epsilon(0.02));
    CHECK(r.cells[0].conditional_mean == doctest::Approx(1000.0 * r.cells[0].probability).epsilon(1e-12));
    CHECK(r.cells[0].joint_mean == doctest::Approx(1000.0 * post_a0 * pe).epsilon(0.03));
    CHECK(r.replications_used == 20);
    CHECK(r.mean_ess > 0.0);
    CHECK(r.mean_ess <= 20000.0);
    double total = 0.0;
    for (const auto& c : r.cells) total += c.probability;
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("two-target queries against enumeration") {
    Rng rng(41);
    for (int t = 0; t < 5; ++t) {
        const BayesNet net = oracle::random_network(rng, 4, 3, 0.7);
        Query q;
        q.evidence = {{"X3", "l0"}};
        q.targets = {"X0", "X2"};
        q.samples = 20000;
        q.replications = 5;
        q.seed = t;
        const QueryResult r = query(net, q, 2);
        const auto exact = oracle::exact_posterior(net, {{3, 0}}, {0, 2});
        REQUIRE(r.cells.size() == exact.size());
        double tv = 0.0;
        for (std::size_t c = 0; c < exact.size(); ++c) tv += std::abs(exact[c] - r.cells[c].probability);
        CHECK(tv / 2 < 0.02);
        CHECK(r.cells[1].levels == std::vector<std::string>{"l0", "l1"});
    }
}

TEST_CASE("results do not depend on the thread count") {
    Rng rng(42);
    const BayesNet net = oracle::random_network(rng, 5, 3);
    Query q;
    q.evidence = {{"X1", "l1"}};
    q.targets = {"X4"};
    q.samples = 3000;
    q.replications = 16;
    q.seed = 99;
    const QueryResult a = query(net, q, 1);
    const QueryResult b = query(net, q, 4);
    for (std::size_t c = 0; c < a.cells.size(); ++c) {
        CHECK(a.cells[c].joint_mean == b.cells[c].joint_mean);
        CHECK(a.cells[c].joint_sd == b.cells[c].joint_sd);
    }
}

TEST_CASE("empty evidence reproduces forward sampling") {
    Rng rng(43);
    const BayesNet net = oracle::random_network(rng, 4, 3);
    Query q;
    q.targets = {"X2"};
    q.samples = 1000;
    q.replications = 1;
    q.seed = 7;
    const QueryResult r = query(net, q);
    const auto cells = sample_forward(net, 1000, derive_seed(7, 0));
    std::vector<double> freq(net.variables()[2].levels.size(), 0.0);
    for (std::size_t i = 0; i < 1000; ++i) freq[cells[i * 4 + 2]] += 1.0 / 1000.0;
    for (std::size_t c = 0; c < freq.size(); ++c) CHECK(r.cells[c].probability == doctest::Approx(freq[c]).epsilon(1e-12));
    CHECK(r.evidence_probability == 1.0);
    CHECK(r.mean_ess == doctest::Approx(1000.0));
    CHECK(sample_forward(net, 10, 3) == sample_forward(net, 10, 3));
}

TEST_CASE("query errors") {
    const BayesNet net = two_node(0.0, 0.0);
    Query q;
    q.targets = {"A"};
    q.evidence = {{"B", "b1"}};
    q.replications = 3;
    q.samples = 100;
    CHECK_THROWS_AS(query(net, q), ZeroEvidenceProbability);
    q.evidence = {{"B", "zzz"}};
    CHECK_THROWS_AS(query(net, q), LevelMismatch);
    q.evidence = {{"A", "a0"}};
    CHECK_THROWS_AS(query(net, q), ConfigError);
    q.evidence = {};
    q.targets = {};
    CHECK_THROWS_AS(query(net, q), ConfigError);
    q.targets = {"nope"};
    CHECK_THROWS_AS(query(net, q), ConfigError);
}

TEST_CASE("query files") {
    Query defaults;
    defaults.replications = 50;
    defaults.samples = 500;
    defaults.scale = 10.0;
    defaults.seed = 3;
    const auto qs = queries_from_json(
        R"([{"name":"a","evidence":{"B":"b1"},"targets":["A"]},{"targets":["A","B"],"R":7,"N":9,"seed":11}])", defaults);
    REQUIRE(qs.size() == 2);
    CHECK(qs[0].name == "a");
    CHECK(qs[0].replications == 50);
    CHECK(qs[0].seed == derive_seed(3, 0));
    CHECK(qs[1].name == "query2");
    CHECK(qs[1].replications == 7);
    CHECK(qs[1].samples == 9);
    CHECK(qs[1].seed == 11);
    CHECK(qs[1].scale == 10.0);
    CHECK_THROWS_AS(queries_from_json("{}"), ConfigError);
    CHECK_THROWS_AS(queries_from_json("[{\"evidence\":{}}]"), ConfigError);
    CHECK_THROWS_AS(queries_from_json(R"([{"name":"x","targets":["A"]},{"name":"x","targets":["A"]}])"), ConfigError);
}

TEST_CASE("query outputs") {
    const BayesNet net = two_node(0.2, 0.6);
    Query q;
    q.name = "demo";
    q.evidence = {{"B", "b1"}};
    q.targets = {"A"};
    q.samples = 2000;
    q.replications = 10;
    q.scale = 500.0;
    const QueryResult r = query(net, q);
    const std::string csv = query_to_csv(r);
    CHECK(csv.rfind("A,mean_count,sd_count,probability", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const QueryResult back = query_result_from_json(query_to_json(r));
    CHECK(query_to_json(back) == query_to_json(r));
    CHECK(query_to_long_csv(back) == query_to_long_csv(r));
    CHECK(query_to_svg(r).find("<svg") != std::string::npos);
    const auto lines = scenario_lines(r, 1);
    CHECK(lines.size() == 1);
    const std::string md = scenario_report({r});
    CHECK(md.find("demo") != std::string::npos);
    CHECK(scenario_report({}).find("No queries.") != std::string::npos);

    Query q2 = q;
    q2.evidence = {};
    q2.targets = {"A", "B"};
    const QueryResult r2 = query(net, q2);
    const std::string cross = query_to_csv(r2);
    CHECK(cross.rfind("A\\B,b0,b1", 0) == 0);
    CHECK(r2.cells.size() == 4);
    CHECK_THROWS_AS(query_result_from_json("[]"), DataError);
}
