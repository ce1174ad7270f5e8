#pragma once

#include <string>
#include <vector>

namespace hexplain {

std::string to_lower(std::string s);

// Collapses runs of whitespace to single spaces and trims both ends.
std::string collapse_whitespace(const std::string& s);

// Lower-cases, strips punctuation, splits on whitespace.
std::vector<std::string> tokenize(const std::string& s);

// Last token of a noun phrase after dropping leading articles ("a brass lamp" -> "lamp").
std::string head_noun(const std::string& phrase);

std::string join(const std::vector<std::string>& parts, const std::string& sep);

// "a lamp", "an egg" depending on the leading sound.
std::string with_article(const std::string& noun);

// Renders "a, b and c" style lists; empty input yields "".
std::string prose_list(const std::vector<std::string>& items);

bool starts_with(const std::string& s, const std::string& prefix);

// 64-bit FNV-1a, rendered as 16 hex chars. Stable across runs and platforms.
std::string fnv1a_hex(const std::string& s);

}  // namespace hexplain
