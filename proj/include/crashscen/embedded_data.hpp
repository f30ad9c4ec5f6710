#pragma once

#include <string_view>

// Contents of data/ compiled into the library.
namespace crashscen::embedded {

std::string_view alphabet_csv();
std::string_view renumber_rules_csv();
std::string_view crash_configs_csv();
std::string_view attribute_schema_json();
std::string_view synthetic_patterns_csv();
std::string_view alternative_constraints_json();
std::string_view default_queries_json();

}  // namespace crashscen::embedded
