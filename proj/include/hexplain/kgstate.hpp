#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "hexplain/engine.hpp"

namespace hexplain {

// The four semantic views of the belief graph.
enum class TripleCategory { Atr, Inv, Obj, Loc };

const char* category_name(TripleCategory c);

// Category is a function of the relation: "is" marks attributes, "has" with
// subject player marks inventory, "in" marks room contents, direction
// relations mark spatial layout. Throws std::invalid_argument otherwise.
TripleCategory category_for(const std::string& relation, const std::string& subject);

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;
    TripleCategory category;

    Triple() : category(TripleCategory::Obj) {}
    Triple(std::string s, std::string r, std::string o);

    auto operator<=>(const Triple& other) const = default;
};

struct SubGraphs;

// Cumulative belief state. Values are immutable; update_graph returns a new
// graph.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    const std::set<Triple>& triples() const { return triples_; }
    std::size_t size() const { return triples_.size(); }
    bool contains(const Triple& t) const { return triples_.count(t) > 0; }
    int step_added(const Triple& t) const;

    // Sorted, deduplicated subjects and objects; the node list for attention.
    const std::vector<std::string>& entities() const { return entities_; }
    std::vector<Triple> incident(const std::string& entity) const;

    static KnowledgeGraph from_triples(const std::set<Triple>& triples, int step = 0);

    friend KnowledgeGraph update_graph(const KnowledgeGraph& prev,
                                       const std::set<Triple>& new_triples, int step);
    friend SubGraphs partition(const KnowledgeGraph& g);

private:
    void rebuild_index();

    std::set<Triple> triples_;
    std::map<Triple, int> step_added_;
    std::vector<std::string> entities_;
    std::map<std::string, std::vector<Triple>> by_entity_;
};

struct SubGraphs {
    static constexpr int count = 4;
    KnowledgeGraph atr, inv, obj, loc;

    const KnowledgeGraph& view(int i) const;
    static const char* view_name(int i);
};

// Union of prev and new_triples after retraction of contradicted facts:
// a newly held object loses its room placement, a newly placed object loses
// its held/stale placements, and the player is in one room at a time.
KnowledgeGraph update_graph(const KnowledgeGraph& prev, const std::set<Triple>& new_triples,
                            int step);

SubGraphs partition(const KnowledgeGraph& g);

using PluralFn = std::function<bool(const std::string&)>;

bool default_plural(const std::string& word);

// Renders one fact as English with copula agreement, e.g.
// "egg is interactable", "trees are interactable", "I have lamp",
// "forest is in the north of house".
std::string triple_to_text(const Triple& t, const PluralFn& is_plural = default_plural);

// Extraction interface; the rule-based extractor below answers four implicit
// questions (attributes, carried objects, room contents, connectivity) from
// the observation text. A learned extractor can be substituted.
class TripleExtractor {
public:
    virtual ~TripleExtractor() = default;
    virtual std::set<Triple> extract(const Observation& obs,
                                     const std::string& current_room) const = 0;
};

class RuleExtractor : public TripleExtractor {
public:
    RuleExtractor() = default;
    explicit RuleExtractor(const GameSpec& spec);

    std::set<Triple> extract(const Observation& obs, const std::string& current_room) const override;

    // Canonical node id for a noun phrase: lexicon match first (full phrase,
    // then head noun), else the bare head noun.
    std::string canonical_entity(const std::string& phrase) const;

private:
    std::map<std::string, std::string> lexicon_;  // lowered phrase -> entity id
};

// Serialization used in trajectory logs: subject \t relation \t object \t category.
std::string triple_to_tsv(const Triple& t);
Triple triple_from_tsv(const std::string& line);

}  // namespace hexplain
