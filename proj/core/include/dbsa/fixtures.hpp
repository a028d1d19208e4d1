#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dbsa::fixtures {

struct PromptFixture {
  std::string_view name;
  std::string_view text;
};

const std::vector<PromptFixture>& prompts();
std::string_view prompt(std::string_view name);

// Neighbor tables in the static-table JSON layout, keyed by prompt name.
std::vector<std::string_view> table_names();
nlohmann::ordered_json neighbor_table(std::string_view name);

}  // namespace dbsa::fixtures
