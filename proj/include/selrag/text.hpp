#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace selrag::text {

// Decodes UTF-8 into code points. Malformed sequences decode to U+FFFD,
// one replacement per offending byte.
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);

// Simple case folding. Covers ASCII, Latin-1, Latin Extended-A, Greek and
// Cyrillic; other code points map to themselves.
char32_t to_lower(char32_t cp) noexcept;
std::string to_lower(std::string_view s);

// True for letters, digits and combining marks. Punctuation, symbols,
// whitespace, private-use and the replacement character are separators.
bool is_word_char(char32_t cp) noexcept;

// Lowercased runs of word characters; everything else separates.
std::vector<std::string> tokenize(std::string_view s);

std::string_view trim(std::string_view s) noexcept;

bool iequals_ascii(std::string_view a, std::string_view b) noexcept;

}  // namespace selrag::text
