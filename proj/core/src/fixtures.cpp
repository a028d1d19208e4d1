#include "dbsa/fixtures.hpp"

#include <algorithm>

#include "dbsa/error.hpp"

namespace dbsa::fixtures {

namespace {

using Table = std::vector<std::pair<std::string_view, std::vector<std::string_view>>>;

const Table& trading_table() {
  static const Table table{
      {"Defendant", {"Accused", "Respondent", "Litigant"}},
      {".", {",", "!", "?"}},
      {",", {";", ".", ":"}},
      {"Senior", {"Top-tier", "High-ranking", "Upper-level"}},
      {"Executive", {"Administrator", "Officer", "Manager"}},
      {"Accused", {"Alleged", "Charged", "Indicted"}},
      {"Insider", {"Internal", "In-house", "Privileged"}},
      {"Trading", {"Dealing", "Stock-jobbing", "Market manipulation"}},
      {"Allegedly", {"Supposedly", "Reportedly", "Purportedly"}},
      {"Using", {"Utilizing", "With the help of", "Via", "By means of"}},
      {"Confidential", {"Private", "Secret", "Classified"}},
      {"Information", {"Data", "Details", "Intelligence"}},
      {"To", {"Toward", "For", "In order to", "So as to"}},
      {"Gain", {"Acquire", "Secure", "Obtain"}},
      {"Substantial", {"Significant", "Considerable", "Major"}},
      {"Financial", {"Monetary", "Fiscal", "Economic"}},
      {"Benefits", {"Advantages", "Gains", "Profits"}},
      {"Maintains", {"Affirms", "Asserts", "Insists"}},
      {"Innocence", {"Guiltlessness", "Blamelessness", "Purity"}},
      {"Claiming", {"Asserting", "Stating", "Contending"}},
      {"Investment", {"Financial", "Capital", "Asset"}},
      {"Decisions", {"Choices", "Determinations", "Conclusions"}},
      {"Public", {"Open", "Publicly available", "Common"}},
      {"Data", {"Information", "Statistics", "Facts"}},
      {"A", {"An", "One", "Any"}},
      {"Is", {"Exists", "Stands", "Remains", "Constitutes"}},
      {"Of", {"Concerning", "Regarding", "About", "Pertaining to"}},
      {"The", {"This", "That", "Said"}},
      {"His", {"Their", "Its", "Her"}},
      {"That", {"Which", "This", "What"}},
      {"All", {"Every", "Each", "Any"}},
      {"Were", {"Had been", "Were being", "Used to be"}},
      {"Based", {"Founded", "Established", "Built", "Grounded"}},
      {"On", {"Upon", "Over", "About", "Concerning"}},
  };
  return table;
}

const Table& manufacturing_table() {
  static const Table table{
      {"Manufacturing", {"Production", "Industrial", "Fabrication"}},
      {"Company", {"Corporation", "Firm", "Business"}},
      {"Was", {"Had been", "Was being", "Were"}},
      {"Sued", {"Prosecuted", "Litigated against", "Indicted"}},
      {"For", {"Because of", "Due to", "On account of"}},
      {"Producing", {"Creating", "Making", "Generating"}},
      {"A", {"One", "An", "Any"}},
      {"Faulty", {"Defective", "Damaged", "Malfunctioning"}},
      {"Product", {"Good", "Item", "Commodity"}},
      {"That", {"Which", "Who", "That which"}},
      {"Caused", {"Provoked", "Led to", "Resulted in"}},
      {"Significant", {"Major", "Considerable", "Substantial"}},
      {"Injuries", {"Harm", "Damage", "Trauma"}},
      {"To", {"Towards", "In relation to", "With respect to"}},
      {"Customer", {"Consumer", "Client", "Purchaser"}},
      {".", {",", "!", "?"}},
  };
  return table;
}

}  // namespace

const std::vector<PromptFixture>& prompts() {
  static const std::vector<PromptFixture> all{
      {"legal",
       "Company A agrees to pay Company B $10 million for developing a revolutionary AI software within 12 months. If Company B fails to deliver a fully functional product by the deadline, they must refund 50% of the payment and provide an additional 3 months of development at no extra cost. However, if the delay is due to circumstances beyond Company B's reasonable control, these penalties shall not apply. This agreement is governed by California law and any disputes shall be resolved through binding arbitration."},
      {"medical",
       "Patient is a 45-year-old male presenting with progressive dyspnea on exertion over the past two weeks. On examination, patient appears mildly distressed. Lower extremities show 2+ pitting edema to mid-shin bilaterally. Chest X-ray shows pulmonary vascular congestion. Clinical presentation is consistent with new-onset congestive heart failure, likely due to hypertensive heart disease."},
      {"trading",
       "A senior executive is accused of insider trading , allegedly using confidential information to gain substantial financial benefits . The defendant maintains his innocence , claiming that all investment decisions were based on public data ."},
      {"manufacturing",
       "A manufacturing company was sued for producing a faulty product that caused significant injuries to a customer ."},
  };
  return all;
}

std::string_view prompt(std::string_view name) {
  const auto& all = prompts();
  auto it = std::find_if(all.begin(), all.end(), [&](const auto& p) { return p.name == name; });
  if (it == all.end()) throw ArgumentError("unknown fixture prompt: " + std::string(name));
  return it->text;
}

std::vector<std::string_view> table_names() { return {"trading", "manufacturing"}; }

nlohmann::ordered_json neighbor_table(std::string_view name) {
  const Table* table = nullptr;
  if (name == "trading") table = &trading_table();
  if (name == "manufacturing") table = &manufacturing_table();
  if (table == nullptr) throw ArgumentError("unknown fixture table: " + std::string(name));
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [token, neighbors] : *table) {
    auto& list = out[std::string(token)] = nlohmann::ordered_json::array();
    for (auto n : neighbors) list.push_back(std::string(n));
  }
  return out;
}

}  // namespace dbsa::fixtures
