#include "hexplain/text_util.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <sstream>

namespace hexplain {

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true;  // swallows leading whitespace
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            if (!in_ws) out.push_back(' ');
            in_ws = true;
        } else {
            out.push_back(static_cast<char>(c));
            in_ws = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::vector<std::string> tokenize(const std::string& s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '_' || c == '-') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

std::string head_noun(const std::string& phrase) {
    auto tokens = tokenize(phrase);
    while (!tokens.empty() &&
           (tokens.front() == "a" || tokens.front() == "an" || tokens.front() == "the")) {
        tokens.erase(tokens.begin());
    }
    if (tokens.empty()) return "";
    return tokens.back();
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

std::string with_article(const std::string& noun) {
    if (noun.empty()) return noun;
    static const std::string vowels = "aeiou";
    bool an = vowels.find(static_cast<char>(std::tolower(noun[0]))) != std::string::npos;
    return (an ? "an " : "a ") + noun;
}

std::string prose_list(const std::vector<std::string>& items) {
    if (items.empty()) return "";
    if (items.size() == 1) return items[0];
    std::string out;
    for (size_t i = 0; i + 1 < items.size(); ++i) {
        if (i > 0) out += ", ";
        out += items[i];
    }
    out += " and " + items.back();
    return out;
}

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace hexplain
