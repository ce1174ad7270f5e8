#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hexplain {

// A verb phrase with up to two vocabulary blanks, e.g. "take __" or
// "throw __ against __". Verbs and prepositions carry interchangeable aliases;
// the first alias of each is canonical.
struct ActionTemplate {
    std::vector<std::string> verb_aliases;         // non-empty; [0] is canonical
    std::vector<std::string> preposition_aliases;  // empty unless the pattern has one
    int blanks = 0;                                // 0, 1 or 2
    std::string surface_pattern;                   // canonical verb/prep with "__" placeholders

    const std::string& verb() const { return verb_aliases.front(); }
    std::string id() const { return surface_pattern; }
};

struct ActionInstance {
    const ActionTemplate* tmpl = nullptr;
    std::vector<std::string> fillers;  // length == tmpl->blanks
    std::string canonical_text;

    bool operator==(const ActionInstance& other) const {
        return tmpl == other.tmpl && fillers == other.fillers;
    }
};

// Immutable template table + vocabulary. All member functions are pure.
class Grammar {
public:
    Grammar() = default;
    Grammar(std::vector<ActionTemplate> templates, std::set<std::string> vocabulary);

    // Parses one template definition line, e.g. "throw/toss __ against/on __".
    static ActionTemplate parse_template_line(const std::string& line, int line_no);

    const std::vector<ActionTemplate>& templates() const { return templates_; }
    const std::set<std::string>& vocabulary() const { return vocabulary_; }
    bool in_vocabulary(const std::string& word) const { return vocabulary_.count(word) > 0; }

    // Throws ArityError / UnknownWordError on bad fillers.
    ActionInstance fill(const ActionTemplate& tmpl, const std::vector<std::string>& fillers) const;

    // Accepts any verb/preposition alias; nullopt when nothing matches.
    // Ambiguity resolves to the template with more literal tokens, then the
    // lexicographically smallest id.
    std::optional<ActionInstance> parse_action(const std::string& text) const;

    // Every instance of every template over the full vocabulary.
    std::vector<ActionInstance> enumerate_all() const;

    std::size_t enumerate_count() const;

private:
    std::vector<ActionTemplate> templates_;
    std::set<std::string> vocabulary_;
};

// Upper bound T * V^max_blanks on the instance count.
std::uint64_t action_space_size(std::uint64_t template_count, std::uint64_t vocab_size,
                                unsigned max_blanks);

std::string canonicalize_action_text(const ActionTemplate& tmpl,
                                     const std::vector<std::string>& fillers);

}  // namespace hexplain
