#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace relkit::corpus {

// UTF-8 decode; invalid byte sequences become U+FFFD (one per bad byte).
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(const std::vector<char32_t>& cps);
std::string encode_utf8(char32_t cp);

// Compatibility folding for the cases this corpus actually hits:
// fullwidth ASCII forms, ideographic space, common typographic quotes
// and dashes, plus ASCII and Latin-1 lowercasing. Wider Unicode
// normalization is out of scope.
char32_t fold_char(char32_t c);

// fold_char over the string, then collapse runs of whitespace to single
// spaces and trim the ends.
std::string normalize(std::string_view s);

// Splits normalized text into tokens: runs of letters/digits, with CJK
// codepoints (kana, unified ideographs) always standing alone so
// unsegmented Japanese yields per-character tokens.
std::vector<std::string> split_words(std::string_view s);

// Character 3-grams of the normalized text with '#' padding on both
// ends, stride 1 over codepoints. Empty text gives an empty list.
std::vector<std::string> char_trigrams(std::string_view s);

uint64_t fnv1a64(std::string_view s);

}  // namespace relkit::corpus
