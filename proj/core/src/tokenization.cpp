#include "dbsa/tokenization.hpp"

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <unordered_map>

#include "dbsa/error.hpp"

namespace dbsa {

namespace {

struct CodePoint {
  char32_t value;
  std::size_t length;
};

// Malformed sequences decode as U+FFFD spanning one byte.
CodePoint decode(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (pos + len > s.size()) return {0xFFFD, 1};
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

struct CodeRange {
  char32_t lo, hi;
};

#include "unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const CodeRange (&table)[N], char32_t c) {
  auto it = std::upper_bound(std::begin(table), std::end(table), c,
                             [](char32_t v, const CodeRange& r) { return v < r.lo; });
  return it != std::begin(table) && c <= std::prev(it)->hi;
}

bool is_space(char32_t c) { return in_ranges(kSpaceRanges, c); }
bool is_word(char32_t c) { return in_ranges(kWordRanges, c); }
bool is_digit(char32_t c) { return in_ranges(kDigitRanges, c); }

// Length of the decimal digit at `pos`, or 0.
std::size_t digit_at(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return 0;
  const CodePoint cp = decode(s, pos);
  return is_digit(cp.value) ? cp.length : 0;
}

// End of a number match starting at `pos`, or `pos` when alternative 1 fails.
std::size_t match_number(std::string_view s, std::size_t pos) {
  const auto digits = [&](std::size_t q) {
    while (std::size_t n = digit_at(s, q)) q += n;
    return q;
  };
  std::size_t q = pos;
  if (s[q] == '$') ++q;
  if (!digit_at(s, q)) return pos;
  q = digits(q);
  while (q < s.size() && s[q] == ',' && digit_at(s, q + 1)) q = digits(q + 1);
  if (q < s.size() && s[q] == '.' && digit_at(s, q + 1)) q = digits(q + 1);
  return q;
}

}  // namespace

TokenizedPrompt tokenize(std::string_view text) {
  TokenizedPrompt out;
  out.raw_text = std::string(text);

  std::size_t pos = 0;
  while (pos < text.size()) {
    const CodePoint cp = decode(text, pos);
    if (is_space(cp.value)) {
      pos += cp.length;
      continue;
    }
    std::size_t end = match_number(text, pos);
    if (end == pos) {
      if (is_word(cp.value)) {
        end = pos + cp.length;
        while (end < text.size()) {
          const CodePoint next = decode(text, end);
          if (!is_word(next.value)) break;
          end += next.length;
        }
      } else {
        end = pos + cp.length;
      }
    }
    out.spans.push_back({pos, end - pos});
    out.tokens.emplace_back(text.substr(pos, end - pos));
    pos = end;
  }

  std::unordered_map<std::string_view, std::size_t> slot;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    const auto [it, inserted] = slot.try_emplace(out.tokens[i], out.unique_index.size());
    if (inserted) out.unique_index.push_back({out.tokens[i], {}});
    out.unique_index[it->second].positions.push_back(i);
  }
  return out;
}

const std::vector<std::size_t>& TokenizedPrompt::positions_of(std::string_view token) const {
  static const std::vector<std::size_t> kNone;
  for (const auto& u : unique_index) {
    if (u.text == token) return u.positions;
  }
  return kNone;
}

std::string_view TokenizedPrompt::gap_before(std::size_t i) const {
  const std::string_view raw = raw_text;
  const std::size_t begin = i == 0 ? 0 : spans[i - 1].offset + spans[i - 1].length;
  return raw.substr(begin, spans[i].offset - begin);
}

std::string_view TokenizedPrompt::trailing_text() const {
  const std::string_view raw = raw_text;
  if (spans.empty()) return raw;
  return raw.substr(spans.back().offset + spans.back().length);
}

std::string TokenizedPrompt::replace_token(std::size_t position,
                                           std::string_view replacement) const {
  if (position >= spans.size()) {
    throw ArgumentError("token position " + std::to_string(position) + " out of range");
  }
  const auto& span = spans[position];
  std::string out;
  out.reserve(raw_text.size() + replacement.size());
  out.append(raw_text, 0, span.offset);
  out.append(replacement);
  out.append(raw_text, span.offset + span.length);
  return out;
}

}  // namespace dbsa
