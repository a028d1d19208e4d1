#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dbsa {

/// Byte range of one token inside the raw prompt.
struct TokenSpan {
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// A unique token string and the 0-based positions where it occurs.
struct UniqueToken {
  std::string text;
  std::vector<std::size_t> positions;

  friend bool operator==(const UniqueToken&, const UniqueToken&) = default;
};

/// A prompt split into scoreable tokens.
///
/// Tokens are the non-overlapping, left-to-right matches of three alternatives
/// tried in order at each non-whitespace position:
///   1. an optional `$`, digits, any number of `,digits` groups and an
///      optional `.digits` fraction (`$10`, `1,250,000`, `3.5`);
///   2. a run of word characters;
///   3. any other single character.
/// Whitespace separates tokens and is never part of one. Word characters are
/// ASCII letters, digits and `_`, plus every non-ASCII code point that is
/// neither Unicode whitespace nor in a punctuation/symbol block. Digits in
/// alternative 1 are ASCII only. Matching is case-sensitive.
struct TokenizedPrompt {
  std::string raw_text;
  std::vector<std::string> tokens;
  std::vector<TokenSpan> spans;
  /// Unique tokens in first-occurrence order.
  std::vector<UniqueToken> unique_index;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }

  /// Positions of `token`, or an empty list when it does not occur.
  const std::vector<std::size_t>& positions_of(std::string_view token) const;

  /// Text between token `i - 1` and token `i` (leading text for i == 0).
  std::string_view gap_before(std::size_t i) const;
  /// Text after the last token.
  std::string_view trailing_text() const;

  /// raw_text with token `position` replaced by `replacement`.
  std::string replace_token(std::size_t position, std::string_view replacement) const;
};

TokenizedPrompt tokenize(std::string_view text);

}  // namespace dbsa
