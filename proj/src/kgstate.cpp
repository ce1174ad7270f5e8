#include "hexplain/kgstate.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "hexplain/text_util.hpp"

namespace hexplain {

const char* category_name(TripleCategory c) {
    switch (c) {
        case TripleCategory::Atr: return "atr";
        case TripleCategory::Inv: return "inv";
        case TripleCategory::Obj: return "obj";
        case TripleCategory::Loc: return "loc";
    }
    return "?";
}

TripleCategory category_for(const std::string& relation, const std::string& subject) {
    if (relation == "is") return TripleCategory::Atr;
    if (relation == "has" && subject == "player") return TripleCategory::Inv;
    if (relation == "in") return TripleCategory::Obj;
    const auto& dirs = direction_words();
    if (std::find(dirs.begin(), dirs.end(), relation) != dirs.end()) return TripleCategory::Loc;
    throw std::invalid_argument("no category for relation '" + relation + "' with subject '" +
                                subject + "'");
}

Triple::Triple(std::string s, std::string r, std::string o)
    : subject(std::move(s)), relation(std::move(r)), object(std::move(o)),
      category(category_for(relation, subject)) {}

int KnowledgeGraph::step_added(const Triple& t) const {
    auto it = step_added_.find(t);
    return it == step_added_.end() ? -1 : it->second;
}

std::vector<Triple> KnowledgeGraph::incident(const std::string& entity) const {
    auto it = by_entity_.find(entity);
    return it == by_entity_.end() ? std::vector<Triple>{} : it->second;
}

void KnowledgeGraph::rebuild_index() {
    entities_.clear();
    by_entity_.clear();
    for (const auto& t : triples_) {
        by_entity_[t.subject].push_back(t);
        if (t.object != t.subject) by_entity_[t.object].push_back(t);
    }
    for (const auto& [e, _] : by_entity_) entities_.push_back(e);
}

KnowledgeGraph KnowledgeGraph::from_triples(const std::set<Triple>& triples, int step) {
    KnowledgeGraph g;
    g.triples_ = triples;
    for (const auto& t : triples) g.step_added_[t] = step;
    g.rebuild_index();
    return g;
}

KnowledgeGraph update_graph(const KnowledgeGraph& prev, const std::set<Triple>& new_triples,
                            int step) {
    KnowledgeGraph out;
    out.triples_ = prev.triples_;
    out.step_added_ = prev.step_added_;

    auto retract_if = [&](auto&& pred) {
        for (auto it = out.triples_.begin(); it != out.triples_.end();) {
            if (pred(*it)) {
                out.step_added_.erase(*it);
                it = out.triples_.erase(it);
            } else {
                ++it;
            }
        }
    };

    for (const auto& t : new_triples) {
        if (t.category == TripleCategory::Inv) {
            // now held: its room placement is stale
            retract_if([&](const Triple& old) {
                return old.category == TripleCategory::Obj && old.subject == t.object;
            });
        } else if (t.category == TripleCategory::Obj && t.subject == "player") {
            retract_if([&](const Triple& old) {
                return old.category == TripleCategory::Obj && old.subject == "player" &&
                       old.object != t.object;
            });
        } else if (t.category == TripleCategory::Obj) {
            // now placed: it is no longer held, nor anywhere else
            retract_if([&](const Triple& old) {
                return (old.category == TripleCategory::Inv && old.object == t.subject) ||
                       (old.category == TripleCategory::Obj && old.subject == t.subject &&
                        old.object != t.object);
            });
        }
    }
    for (const auto& t : new_triples) {
        auto [it, inserted] = out.triples_.insert(t);
        (void)it;
        if (inserted) out.step_added_[t] = step;
    }
    out.rebuild_index();
    return out;
}

const KnowledgeGraph& SubGraphs::view(int i) const {
    switch (i) {
        case 0: return atr;
        case 1: return inv;
        case 2: return obj;
        default: return loc;
    }
}

const char* SubGraphs::view_name(int i) {
    switch (i) {
        case 0: return "atr";
        case 1: return "inv";
        case 2: return "obj";
        default: return "loc";
    }
}

SubGraphs partition(const KnowledgeGraph& g) {
    std::set<Triple> atr, inv, obj, loc;
    for (const auto& t : g.triples()) {
        switch (t.category) {
            case TripleCategory::Atr: atr.insert(t); break;
            case TripleCategory::Inv: inv.insert(t); break;
            case TripleCategory::Obj: obj.insert(t); break;
            case TripleCategory::Loc: loc.insert(t); break;
        }
    }
    SubGraphs out;
    auto copy_steps = [&](KnowledgeGraph& view, const std::set<Triple>& ts) {
        view = KnowledgeGraph::from_triples(ts);
        for (const auto& t : ts) view.step_added_[t] = g.step_added(t);
    };
    copy_steps(out.atr, atr);
    copy_steps(out.inv, inv);
    copy_steps(out.obj, obj);
    copy_steps(out.loc, loc);
    return out;
}

bool default_plural(const std::string& word) {
    return word.size() > 1 && word.back() == 's';
}

std::string triple_to_text(const Triple& t, const PluralFn& is_plural) {
    const char* copula = is_plural(t.subject) ? "are" : "is";
    switch (t.category) {
        case TripleCategory::Atr:
            return t.subject + " " + copula + " " + t.object;
        case TripleCategory::Inv:
            return "I have " + t.object;
        case TripleCategory::Obj:
            if (t.subject == "player") return "I am in " + t.object + " now";
            return t.subject + " " + copula + " in " + t.object;
        case TripleCategory::Loc:
            return t.subject + " " + copula + " in the " + t.relation + " of " + t.object;
    }
    return "";
}

// ---------------------------------------------------------------------------
// Rule-based extraction

RuleExtractor::RuleExtractor(const GameSpec& spec) {
    for (const auto& o : spec.objects) {
        lexicon_[to_lower(o.name)] = o.id;
        std::string head = head_noun(o.name);
        lexicon_.emplace(head, o.id);  // first object keeps an ambiguous head
        lexicon_[o.id] = o.id;
    }
    for (const auto& r : spec.rooms) lexicon_[r.id] = r.id;
}

std::string RuleExtractor::canonical_entity(const std::string& phrase) const {
    std::string lowered = collapse_whitespace(to_lower(phrase));
    auto tokens = tokenize(lowered);
    while (!tokens.empty() &&
           (tokens.front() == "a" || tokens.front() == "an" || tokens.front() == "the")) {
        tokens.erase(tokens.begin());
    }
    std::string stripped = join(tokens, " ");
    auto it = lexicon_.find(stripped);
    if (it != lexicon_.end()) return it->second;
    std::string head = tokens.empty() ? "" : tokens.back();
    it = lexicon_.find(head);
    if (it != lexicon_.end()) return it->second;
    return head;
}

namespace {

// Splits "a lamp, a key and a chest" into noun phrases.
std::vector<std::string> split_listing(const std::string& text) {
    std::vector<std::string> out;
    std::string rest = text;
    auto push = [&](const std::string& part) {
        std::string p = collapse_whitespace(part);
        if (!p.empty()) out.push_back(p);
    };
    std::size_t pos;
    while ((pos = rest.find(", ")) != std::string::npos) {
        push(rest.substr(0, pos));
        rest = rest.substr(pos + 2);
    }
    pos = rest.find(" and ");
    if (pos != std::string::npos) {
        push(rest.substr(0, pos));
        push(rest.substr(pos + 5));
    } else {
        push(rest);
    }
    return out;
}

// Extracts the clause between a prefix and the first period after it.
std::optional<std::string> clause_after(const std::string& text, const std::string& prefix) {
    auto pos = text.find(prefix);
    if (pos == std::string::npos) return std::nullopt;
    auto start = pos + prefix.size();
    auto end = text.find('.', start);
    if (end == std::string::npos) end = text.size();
    return text.substr(start, end - start);
}

}  // namespace

std::set<Triple> RuleExtractor::extract(const Observation& obs,
                                        const std::string& current_room) const {
    std::set<Triple> out;

    // Where am I?
    if (!current_room.empty()) out.insert(Triple("player", "in", current_room));

    // What am I carrying?
    if (auto carried = clause_after(obs.inventory_text, "You are carrying ")) {
        if (*carried != "nothing") {
            for (const auto& phrase : split_listing(*carried)) {
                std::string id = canonical_entity(phrase);
                if (!id.empty()) out.insert(Triple("player", "has", id));
            }
        }
    }

    // What objects are around me?
    if (auto seen = clause_after(obs.desc, "You can see ")) {
        std::string listing = *seen;
        auto here = listing.rfind(" here");
        if (here != std::string::npos) listing = listing.substr(0, here);
        for (const auto& phrase : split_listing(listing)) {
            std::string id = canonical_entity(phrase);
            if (id.empty()) continue;
            if (!current_room.empty()) out.insert(Triple(id, "in", current_room));
            out.insert(Triple(id, "is", "interactable"));
        }
    }

    // How did I get here? Movement is always the first feedback sentence.
    std::string first_sentence = obs.feedback.substr(0, obs.feedback.find('.'));
    auto tokens = tokenize(first_sentence);
    auto find_word = [&](const std::string& w) {
        return std::find(tokens.begin(), tokens.end(), w);
    };
    if (tokens.size() >= 6 && tokens[0] == "you" && (tokens[1] == "walk" || tokens[1] == "climb")) {
        auto from_it = find_word("from");
        auto to_it = find_word("to");
        const auto& dirs = direction_words();
        std::string dir = tokens[1] == "climb" ? "up" : tokens[2];
        if (from_it != tokens.end() && to_it != tokens.end() && to_it > from_it &&
            std::find(dirs.begin(), dirs.end(), dir) != dirs.end()) {
            // "... from the <a> to the <b>"
            std::vector<std::string> from_phrase(from_it + 1, to_it);
            std::vector<std::string> to_phrase(to_it + 1, tokens.end());
            std::string a = canonical_entity(join(from_phrase, " "));
            std::string b = canonical_entity(join(to_phrase, " "));
            if (!a.empty() && !b.empty() && a != b) out.insert(Triple(b, dir, a));
        }
    }

    // What changed?
    if (auto opened = clause_after(obs.feedback, "You open the ")) {
        std::string id = canonical_entity(*opened);
        if (!id.empty()) out.insert(Triple(id, "is", "open"));
    }

    return out;
}

std::string triple_to_tsv(const Triple& t) {
    return t.subject + "\t" + t.relation + "\t" + t.object + "\t" + category_name(t.category);
}

Triple triple_from_tsv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    if (fields.size() != 4) throw std::invalid_argument("triple needs 4 tab-separated fields");
    Triple t(fields[0], fields[1], fields[2]);
    if (std::string(category_name(t.category)) != fields[3])
        throw std::invalid_argument("triple category mismatch: " + fields[3]);
    return t;
}

}  // namespace hexplain
