#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hexplain/grammar.hpp"

namespace hexplain {

inline const std::vector<std::string>& direction_words() {
    static const std::vector<std::string> dirs = {"north", "south", "east", "west", "up", "down"};
    return dirs;
}

// One predicate of a trigger condition, optionally negated.
//   at <room> | carry <object> | is <object> <attribute> | placed <object> <room>
struct ConditionAtom {
    enum class Kind { At, Carry, Is, Placed };
    Kind kind;
    std::string a;
    std::string b;  // attribute or room for Is/Placed
    bool negated = false;
};

// Conjunction of atoms joined with '&'.
struct Condition {
    std::vector<ConditionAtom> atoms;
    std::string source_text;
};

struct RoomDef {
    std::string id;
    std::string name;  // display name, defaults to id
    std::string desc;
    std::map<std::string, std::string> exits;  // direction -> room id
    bool dark = false;
};

struct ObjectDef {
    std::string id;
    std::string name;  // display noun phrase, defaults to id
    std::string initial_location;  // room id or "player"
    std::set<std::string> attributes;
    bool portable = true;
    std::string unlocks;   // object id this key opens, or empty
    std::string climb_to;  // room id reached by climbing, or empty
};

struct RewardRule {
    std::string id;
    Condition when;
    int points = 0;
    bool once = true;
    std::string message;
};

struct HazardRule {
    std::string id;
    Condition when;
    std::string message;
    int points = 0;  // optional penalty
};

struct GameSpec {
    std::string game_id;
    std::vector<RoomDef> rooms;
    std::vector<ObjectDef> objects;
    Grammar grammar;
    std::vector<RewardRule> reward_rules;
    std::vector<HazardRule> hazards;
    std::map<std::string, bool> plural_overrides;
    std::string start_room;
    std::string goal_description;
    int max_score = 0;

    const RoomDef* room(const std::string& id) const;
    const ObjectDef* object(const std::string& id) const;
    bool is_plural(const std::string& word) const;
};

struct EnvState {
    std::string room;
    std::set<std::string> inventory;
    std::map<std::string, std::string> object_locations;  // object id -> room id
    std::map<std::string, std::set<std::string>> object_attributes;
    std::set<std::string> fired_rewards;
    int score = 0;
    int step_index = 0;
    bool done = false;
    bool death = false;

    bool operator==(const EnvState& other) const = default;
};

// The four text channels the agent perceives, plus the step's score delta.
struct Observation {
    std::string desc;            // current room rendering
    std::string feedback;        // response to the previous action
    std::string inventory_text;  // "You are carrying ..."
    std::string prev_action;     // "look" at reset
    int reward = 0;
    int total_score = 0;
};

// Feedback emitted for inputs no template recognizes. valid_actions never
// returns an action that produces this string.
inline const std::string& generic_failure_feedback() {
    static const std::string msg = "That's not something you can do here.";
    return msg;
}

// One "[kind id]" block of the sectioned key=value format shared by game
// definitions and run configs.
struct ConfigSection {
    std::string kind;
    std::string id;
    int line_no = 0;
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<std::pair<int, std::string>> raw_lines;
};

std::vector<ConfigSection> parse_sections(const std::string& text);

// Parses a game definition (sectioned key=value text). Throws ParseError /
// ValidationError. Does not run the reachability check; see verify_max_score.
GameSpec load_game(const std::string& definition_text);

// Exhaustive search over reachable states; returns the best achievable score.
// Throws ValidationError if it disagrees with spec.max_score.
int verify_max_score(const GameSpec& spec, std::size_t state_cap = 2000000);

// Deterministic: the seed is accepted for interface stability; built-in games
// have no randomized content.
std::pair<EnvState, Observation> reset(const GameSpec& spec, std::uint64_t seed);

struct StepResult {
    EnvState state;
    Observation obs;
    bool done = false;
};

// Any string is accepted; unparseable or inapplicable input yields failure
// feedback, zero reward and an otherwise unchanged world.
StepResult step(const GameSpec& spec, const EnvState& state, const std::string& action);

// Actions whose application changes the state or fires a reward rule, plus
// movement through existing exits. Empty on terminal states.
std::vector<std::string> valid_actions(const GameSpec& spec, const EnvState& state);

// Same contract as valid_actions but applies every grammar-enumerable
// instance. Slow; used as the reference for tests.
std::vector<std::string> valid_actions_brute_force(const GameSpec& spec, const EnvState& state);

bool eval_condition(const GameSpec& spec, const EnvState& state, const Condition& cond);

Condition parse_condition(const std::string& text, int line_no);

// Room rendering used for both o_desc and "look" feedback.
std::string render_room(const GameSpec& spec, const EnvState& state);
std::string render_inventory(const GameSpec& spec, const EnvState& state);

}  // namespace hexplain
