#include <doctest.h>

#include <set>

#include "crashscen/error.hpp"
#include "crashscen/event_codec.hpp"
#include "crashscen/rng.hpp"

using namespace crashscen;

TEST_CASE("builtin alphabet has the expected cardinalities") {
    const Alphabet& a = Alphabet::builtin();
    CHECK(a.size() == kAlphabetSize);
    CHECK(a.size(Phase::Pcrash1) == 14);
    CHECK(a.size(Phase::Pcrash2) == 29);
    CHECK(a.size(Phase::Pcrash3) == 11);
    CHECK(a.size(Phase::Soe) == 17);
    std::set<std::pair<Phase, int>> seen;
    for (const auto& e : a.entries())
        for (int c : e.crss_codes) CHECK(seen.insert({e.phase, c}).second);
}

TEST_CASE("encode_event maps raw codes onto tags") {
    const Alphabet& a = Alphabet::builtin();
    CHECK(encode_event(a, Phase::Pcrash1, Role::V1, 1).rendered() == "1ST");
    CHECK(encode_event(a, Phase::Pcrash1, Role::V2, 4).rendered() == "2A");
    CHECK(encode_event(a, Phase::Pcrash1, Role::V1, 99).code == "N");
    CHECK(encode_event(a, Phase::Soe, Role::V1, 12).rendered() == "1XV");
    CHECK(encode_event(a, Phase::Soe, Role::V2, 54).rendered() == "2XV");
    CHECK_THROWS_AS(encode_event(a, Phase::Pcrash1, Role::V1, 777), UnknownCode);
}

TEST_CASE("single-sided SOE tag exists only for its role") {
    const Alphabet& a = Alphabet::builtin();
    const auto v2 = encode_event(a, Phase::Soe, Role::V2, 14);
    CHECK(v2.rendered() == "2XPV");
    CHECK_THROWS_AS(encode_event(a, Phase::Soe, Role::V1, 14), UnknownCode);
}

TEST_CASE("alphabet cardinality check") {
    CHECK_THROWS_AS(Alphabet::from_csv("phase,code_tag,crss_codes,description\nPCRASH1,ST,1,x\n"), DataError);
    const Alphabet small = Alphabet::from_csv("phase,code_tag,crss_codes,description\nPCRASH1,ST,1,x\n", "t", false);
    CHECK(small.size() == 1);
}

TEST_CASE("renumbering for left turn across path") {
    const RenumberTable& t = RenumberTable::builtin();
    const Renumbering keep = renumber_vehicles(t, 68, 69);
    CHECK(!keep.swapped());
    const Renumbering swap = renumber_vehicles(t, 69, 68);
    CHECK(swap.swapped());
    CHECK(swap.role_of(1) == Role::V2);
    CHECK(swap.role_of(2) == Role::V1);
    CHECK(!swap.role_of(3));
    CHECK_THROWS_AS(renumber_vehicles(t, 20, 21), MissingRule);
    const Renumbering fallback = renumber_or_keep(t, 20, 21);
    CHECK(!fallback.rule_found);
    CHECK(!fallback.swapped());
}

TEST_CASE("renumber rule validation") {
    RenumberTable t;
    CHECK_THROWS_AS(t.add({"x", 1, RoleAssignment::V1, 2, RoleAssignment::V1}), ConfigError);
}

namespace {
PcrashTriple triple(Role r, const char* a, const char* b, const char* c) {
    return {EventToken{r, Phase::Pcrash1, a}, EventToken{r, Phase::Pcrash2, b}, EventToken{r, Phase::Pcrash3, c}};
}
}  // namespace

TEST_CASE("assemble_sequence puts the vehicle of the first event first") {
    const auto v1 = triple(Role::V1, "ST", "OIS", "N");
    const auto v2 = triple(Role::V2, "S", "OIS", "NA");
    std::vector<SoeEvent> soe{{Role::V1, "XV"}};
    const CrashSequence a = assemble_sequence(v1, v2, soe, 2.5, CrashConfig::D);
    CHECK(render(a) == "1ST-1OIS-1N-2S-2OIS-2NA-1XV");
    CHECK(a.weight == 2.5);
    CHECK(has_canonical_order(a.tokens));

    std::vector<SoeEvent> soe2{{Role::V2, "XV"}, {Role::V1, "ROR"}};
    const CrashSequence b = assemble_sequence(v1, v2, soe2, 1.0, CrashConfig::D);
    CHECK(render(b) == "2S-2OIS-2NA-1ST-1OIS-1N-2XV-1ROR");
    CHECK(has_canonical_order(b.tokens));
}

TEST_CASE("assemble_sequence errors") {
    const auto v1 = triple(Role::V1, "ST", "OIS", "N");
    const auto v2 = triple(Role::V2, "S", "OIS", "NA");
    CHECK_THROWS_AS(assemble_sequence(v1, v2, {}, 1.0, CrashConfig::D), EmptySOE);
    std::vector<SoeEvent> ambiguous{{std::nullopt, "XV"}};
    CHECK_THROWS_AS(assemble_sequence(v1, v2, ambiguous, 1.0, CrashConfig::D), AmbiguousFirstEvent);
    std::vector<SoeEvent> ok{{Role::V1, "XV"}};
    CHECK_THROWS_AS(assemble_sequence(v1, v2, ok, 0.0, CrashConfig::D), DataError);
    const auto bad = triple(Role::V1, "ST", "NOPE", "N");
    CHECK_THROWS_AS(assemble_sequence(bad, v2, ok, 1.0, CrashConfig::D), DataError);
}

TEST_CASE("reference sequences parse and render back") {
    for (const char* s : {"1L-1L-1N-2ST-2OEO-2N-2XV-1CARG-1ROR-1XF-1XF-1XF-2ROL-2XF-2XF-2XF",
                          "1ST-1ST-1N-2ST-2OET-2N-1XV-2ROL-2XF-2XF-1ROR-1XF-1XP-1XP-1XP-1XF",
                          "1ST-1OES-1BR-2ST-2OIS-2NA-1XV-1ROR-1XF-1NCH", "1R-1OIS-1N-2S-2OIS-2NA-1XV"}) {
        const auto tokens = parse_tokens(s);
        CHECK(render(tokens) == s);
        CHECK(tokens[0].phase == Phase::Pcrash1);
        CHECK(tokens[4].phase == Phase::Pcrash2);
        CHECK(tokens[6].phase == Phase::Soe);
    }
    CHECK(parse_tokens("1L-1L-1N-2ST-2OEO-2N-2XV-1CARG-1ROR-1XF-1XF-1XF-2ROL-2XF-2XF-2XF").size() == 16);
}

TEST_CASE("parse errors carry the offset of the bad token") {
    try {
        parse_tokens("1ST-1OIS-3N-2S-2OIS-2NA-1XV");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position() == 9);
    }
    CHECK_THROWS_AS(parse_tokens(""), ParseError);
    CHECK_THROWS_AS(parse_tokens("1ST-1QQQ-1N-2S-2OIS-2NA-1XV"), ParseError);
}

TEST_CASE("render/parse round trip on random canonical sequences") {
    const Alphabet& a = Alphabet::builtin();
    Rng rng(17);
    for (int t = 0; t < 300; ++t) {
        const Role lead = rng.below(2) ? Role::V1 : Role::V2;
        std::vector<EventToken> tokens;
        for (int i = 0; i < 6; ++i) {
            const Role r = i < 3 ? lead : other_role(lead);
            const Phase p = kPhases[i % 3];
            const auto tags = a.tags(p, r);
            tokens.push_back({r, p, tags[rng.below(tags.size())]});
        }
        const std::size_t soe = 1 + rng.below(5);
        for (std::size_t i = 0; i < soe; ++i) {
            const Role r = rng.below(2) ? Role::V1 : Role::V2;
            const auto tags = a.tags(Phase::Soe, r);
            tokens.push_back({r, Phase::Soe, tags[rng.below(tags.size())]});
        }
        REQUIRE(has_canonical_order(tokens));
        CHECK(parse_tokens(render(tokens)) == tokens);
    }
}
