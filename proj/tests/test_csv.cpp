#include <doctest.h>

#include "crashscen/csv.hpp"
#include "crashscen/error.hpp"

using namespace crashscen;

TEST_CASE("csv round trip with quoting") {
    Table t({"a", "b"});
    t.add_row({"x,y", "say \"hi\""});
    t.add_row({"", "line\nbreak"});
    const Table back = Table::parse(t.to_string());
    CHECK(back.header() == t.header());
    REQUIRE(back.rows() == 2);
    CHECK(back.at(0, 0) == "x,y");
    CHECK(back.at(0, 1) == "say \"hi\"");
    CHECK(back.at(1, 1) == "line\nbreak");
}

TEST_CASE("csv rejects ragged rows and reports missing columns") {
    CHECK_THROWS_AS(Table::parse("a,b\n1,2,3\n"), DataError);
    const Table t = Table::parse("a,b\r\n1,2\r\n");
    CHECK(t.at(0, 1) == "2");
    CHECK_THROWS_AS(t.column("c"), MissingColumn);
    CHECK(!t.find_column("c"));
}

TEST_CASE("numeric helpers") {
    CHECK(parse_int(" 42 ") == 42);
    CHECK(!parse_int("4.2"));
    CHECK(parse_double("0.25") == 0.25);
    CHECK(!parse_double("abc"));
    CHECK(*parse_double(format_double(0.1)) == 0.1);
    CHECK(split("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
    CHECK(trim("  x \t") == "x");
}
