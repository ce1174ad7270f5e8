#include "hexplain/grammar.hpp"

#include <algorithm>
#include <sstream>

#include "hexplain/errors.hpp"
#include "hexplain/text_util.hpp"

namespace hexplain {

namespace {

std::vector<std::string> split_aliases(const std::string& token) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : token) {
        if (c == '/') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

std::uint64_t action_space_size(std::uint64_t template_count, std::uint64_t vocab_size,
                                unsigned max_blanks) {
    std::uint64_t fills = 1;
    for (unsigned i = 0; i < max_blanks; ++i) fills *= vocab_size;
    return template_count * fills;
}

std::string canonicalize_action_text(const ActionTemplate& tmpl,
                                     const std::vector<std::string>& fillers) {
    std::string out = tmpl.verb();
    std::size_t next = 0;
    if (tmpl.blanks >= 1) out += " " + fillers[next++];
    if (tmpl.blanks == 2) {
        out += " " + tmpl.preposition_aliases.front();
        out += " " + fillers[next++];
    }
    return collapse_whitespace(to_lower(out));
}

ActionTemplate Grammar::parse_template_line(const std::string& line, int line_no) {
    std::istringstream in(collapse_whitespace(to_lower(line)));
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    if (tokens.empty()) throw ParseError("empty template", line_no);

    ActionTemplate tmpl;
    tmpl.verb_aliases = split_aliases(tokens[0]);
    if (tmpl.verb_aliases.empty()) throw ParseError("template has no verb", line_no);

    std::size_t i = 1;
    if (i < tokens.size()) {
        if (tokens[i] != "__") throw ParseError("expected '__' after verb", line_no);
        tmpl.blanks = 1;
        ++i;
    }
    if (i < tokens.size()) {
        tmpl.preposition_aliases = split_aliases(tokens[i]);
        if (tmpl.preposition_aliases.empty() || tmpl.preposition_aliases.front() == "__")
            throw ParseError("expected preposition between blanks", line_no);
        ++i;
        if (i >= tokens.size() || tokens[i] != "__")
            throw ParseError("expected '__' after preposition", line_no);
        tmpl.blanks = 2;
        ++i;
    }
    if (i != tokens.size()) throw ParseError("trailing tokens in template", line_no);

    tmpl.surface_pattern = tmpl.verb();
    if (tmpl.blanks >= 1) tmpl.surface_pattern += " __";
    if (tmpl.blanks == 2) tmpl.surface_pattern += " " + tmpl.preposition_aliases.front() + " __";
    return tmpl;
}

Grammar::Grammar(std::vector<ActionTemplate> templates, std::set<std::string> vocabulary)
    : templates_(std::move(templates)), vocabulary_(std::move(vocabulary)) {}

ActionInstance Grammar::fill(const ActionTemplate& tmpl,
                             const std::vector<std::string>& fillers) const {
    if (static_cast<int>(fillers.size()) != tmpl.blanks) {
        throw ArityError("template '" + tmpl.id() + "' takes " + std::to_string(tmpl.blanks) +
                         " fillers, got " + std::to_string(fillers.size()));
    }
    for (const auto& f : fillers) {
        if (!in_vocabulary(f)) throw UnknownWordError(f);
    }
    ActionInstance inst;
    inst.tmpl = &tmpl;
    inst.fillers = fillers;
    inst.canonical_text = canonicalize_action_text(tmpl, fillers);
    return inst;
}

std::optional<ActionInstance> Grammar::parse_action(const std::string& text) const {
    auto tokens = tokenize(text);
    if (tokens.empty()) return std::nullopt;

    const ActionTemplate* best = nullptr;
    std::vector<std::string> best_fillers;
    int best_literals = -1;

    for (const auto& tmpl : templates_) {
        bool verb_ok = std::find(tmpl.verb_aliases.begin(), tmpl.verb_aliases.end(), tokens[0]) !=
                       tmpl.verb_aliases.end();
        if (!verb_ok) continue;

        std::vector<std::string> fillers;
        bool match = false;
        if (tmpl.blanks == 0) {
            match = tokens.size() == 1;
        } else if (tmpl.blanks == 1) {
            match = tokens.size() == 2 && in_vocabulary(tokens[1]);
            if (match) fillers = {tokens[1]};
        } else {
            if (tokens.size() == 4) {
                bool prep_ok = std::find(tmpl.preposition_aliases.begin(),
                                         tmpl.preposition_aliases.end(),
                                         tokens[2]) != tmpl.preposition_aliases.end();
                match = prep_ok && in_vocabulary(tokens[1]) && in_vocabulary(tokens[3]);
                if (match) fillers = {tokens[1], tokens[3]};
            }
        }
        if (!match) continue;

        // literal token count = verb plus preposition if present
        int literals = 1 + (tmpl.blanks == 2 ? 1 : 0);
        if (literals > best_literals ||
            (literals == best_literals && best != nullptr && tmpl.id() < best->id())) {
            best = &tmpl;
            best_fillers = fillers;
            best_literals = literals;
        }
    }
    if (best == nullptr) return std::nullopt;

    ActionInstance inst;
    inst.tmpl = best;
    inst.fillers = best_fillers;
    inst.canonical_text = canonicalize_action_text(*best, best_fillers);
    return inst;
}

std::vector<ActionInstance> Grammar::enumerate_all() const {
    std::vector<ActionInstance> out;
    std::vector<std::string> words(vocabulary_.begin(), vocabulary_.end());
    for (const auto& tmpl : templates_) {
        if (tmpl.blanks == 0) {
            out.push_back(fill(tmpl, {}));
        } else if (tmpl.blanks == 1) {
            for (const auto& w : words) out.push_back(fill(tmpl, {w}));
        } else {
            for (const auto& w1 : words)
                for (const auto& w2 : words) out.push_back(fill(tmpl, {w1, w2}));
        }
    }
    return out;
}

std::size_t Grammar::enumerate_count() const {
    std::size_t v = vocabulary_.size();
    std::size_t count = 0;
    for (const auto& tmpl : templates_) {
        if (tmpl.blanks == 0) count += 1;
        else if (tmpl.blanks == 1) count += v;
        else count += v * v;
    }
    return count;
}

}  // namespace hexplain
