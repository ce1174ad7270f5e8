#include "hexplain/engine.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "hexplain/errors.hpp"
#include "hexplain/text_util.hpp"

namespace hexplain {

namespace {

bool is_direction(const std::string& w) {
    const auto& dirs = direction_words();
    return std::find(dirs.begin(), dirs.end(), w) != dirs.end();
}

bool carries_light(const GameSpec& spec, const EnvState& state) {
    for (const auto& id : state.inventory) {
        auto it = state.object_attributes.find(id);
        if (it != state.object_attributes.end() && it->second.count("light")) return true;
        const ObjectDef* def = spec.object(id);
        if (def && def->attributes.count("light")) return true;
    }
    return false;
}

bool object_visible(const EnvState& state, const std::string& obj) {
    auto it = state.object_locations.find(obj);
    return it != state.object_locations.end() && it->second == state.room;
}

bool object_accessible(const EnvState& state, const std::string& obj) {
    return state.inventory.count(obj) || object_visible(state, obj);
}

bool has_attr(const EnvState& state, const std::string& obj, const std::string& attr) {
    auto it = state.object_attributes.find(obj);
    return it != state.object_attributes.end() && it->second.count(attr) > 0;
}

// State identity ignoring the step counter; score tracks fired rules and
// penalties so it is folded in.
std::string state_key(const EnvState& s) {
    std::ostringstream out;
    out << s.room << '|' << s.done << s.death << '|' << s.score << '|';
    for (const auto& o : s.inventory) out << o << ',';
    out << '|';
    for (const auto& [o, loc] : s.object_locations) out << o << '@' << loc << ',';
    out << '|';
    for (const auto& [o, attrs] : s.object_attributes) {
        out << o << ':';
        for (const auto& a : attrs) out << a << '.';
        out << ',';
    }
    out << '|';
    for (const auto& r : s.fired_rewards) out << r << ',';
    return out.str();
}

bool state_changed(const EnvState& before, const EnvState& after) {
    return before.room != after.room || before.inventory != after.inventory ||
           before.object_locations != after.object_locations ||
           before.object_attributes != after.object_attributes ||
           before.fired_rewards != after.fired_rewards || before.score != after.score ||
           before.done != after.done || before.death != after.death;
}

}  // namespace

const RoomDef* GameSpec::room(const std::string& id) const {
    for (const auto& r : rooms)
        if (r.id == id) return &r;
    return nullptr;
}

const ObjectDef* GameSpec::object(const std::string& id) const {
    for (const auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

bool GameSpec::is_plural(const std::string& word) const {
    auto it = plural_overrides.find(word);
    if (it != plural_overrides.end()) return it->second;
    return word.size() > 1 && word.back() == 's';
}

Condition parse_condition(const std::string& text, int line_no) {
    Condition cond;
    cond.source_text = collapse_whitespace(text);
    std::string chunk;
    std::istringstream in(cond.source_text);
    std::vector<std::string> parts;
    {
        std::string acc;
        for (char c : cond.source_text) {
            if (c == '&') {
                parts.push_back(acc);
                acc.clear();
            } else {
                acc.push_back(c);
            }
        }
        parts.push_back(acc);
    }
    for (auto& part : parts) {
        auto tokens = tokenize(part);
        bool negated = false;
        std::string trimmed = collapse_whitespace(part);
        if (!trimmed.empty() && trimmed[0] == '!') negated = true;
        if (tokens.empty()) throw ParseError("empty condition atom", line_no);

        ConditionAtom atom;
        atom.negated = negated;
        const std::string& pred = tokens[0];
        if (pred == "at" && tokens.size() == 2) {
            atom.kind = ConditionAtom::Kind::At;
            atom.a = tokens[1];
        } else if (pred == "carry" && tokens.size() == 2) {
            atom.kind = ConditionAtom::Kind::Carry;
            atom.a = tokens[1];
        } else if (pred == "is" && tokens.size() == 3) {
            atom.kind = ConditionAtom::Kind::Is;
            atom.a = tokens[1];
            atom.b = tokens[2];
        } else if (pred == "placed" && tokens.size() == 3) {
            atom.kind = ConditionAtom::Kind::Placed;
            atom.a = tokens[1];
            atom.b = tokens[2];
        } else {
            throw ParseError("unknown condition atom '" + trimmed + "'", line_no);
        }
        cond.atoms.push_back(atom);
    }
    return cond;
}

bool eval_condition(const GameSpec& spec, const EnvState& state, const Condition& cond) {
    (void)spec;
    for (const auto& atom : cond.atoms) {
        bool value = false;
        switch (atom.kind) {
            case ConditionAtom::Kind::At:
                value = state.room == atom.a;
                break;
            case ConditionAtom::Kind::Carry:
                value = state.inventory.count(atom.a) > 0;
                break;
            case ConditionAtom::Kind::Is:
                value = has_attr(state, atom.a, atom.b);
                break;
            case ConditionAtom::Kind::Placed: {
                auto it = state.object_locations.find(atom.a);
                value = it != state.object_locations.end() && it->second == atom.b;
                break;
            }
        }
        if (atom.negated) value = !value;
        if (!value) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Definition parsing

std::vector<ConfigSection> parse_sections(const std::string& text) {
    std::vector<ConfigSection> sections;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    ConfigSection* cur = nullptr;
    while (std::getline(in, line)) {
        ++line_no;
        std::string trimmed = collapse_whitespace(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        if (trimmed.front() == '[') {
            if (trimmed.back() != ']') throw ParseError("unterminated section header", line_no);
            auto inner = collapse_whitespace(trimmed.substr(1, trimmed.size() - 2));
            auto tokens = tokenize(inner);
            if (tokens.empty()) throw ParseError("empty section header", line_no);
            ConfigSection s;
            s.kind = tokens[0];
            if (tokens.size() > 1) s.id = tokens[1];
            if (tokens.size() > 2) throw ParseError("too many tokens in section header", line_no);
            s.line_no = line_no;
            sections.push_back(s);
            cur = &sections.back();
            continue;
        }
        if (cur == nullptr) throw ParseError("content before first section", line_no);
        auto eq = trimmed.find('=');
        if (eq != std::string::npos) {
            std::string key = collapse_whitespace(trimmed.substr(0, eq));
            std::string value = collapse_whitespace(trimmed.substr(eq + 1));
            cur->entries.emplace_back(key, value);
        }
        cur->raw_lines.emplace_back(line_no, trimmed);
    }
    if (sections.empty()) throw ParseError("empty definition", 1);
    return sections;
}

namespace {

int parse_int(const std::string& v, int line_no) {
    try {
        size_t pos = 0;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ParseError("expected integer, got '" + v + "'", line_no);
    }
}

bool parse_bool(const std::string& v, int line_no) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ParseError("expected boolean, got '" + v + "'", line_no);
}

void validate(const GameSpec& spec) {
    if (spec.rooms.empty()) throw ValidationError("game has no rooms");
    for (const auto& r : spec.rooms) {
        for (const auto& [dir, target] : r.exits) {
            if (!is_direction(dir))
                throw ValidationError("room '" + r.id + "' has non-direction exit '" + dir + "'");
            if (spec.room(target) == nullptr)
                throw ValidationError("room '" + r.id + "' exit " + dir +
                                      " targets undefined room '" + target + "'");
        }
    }
    for (const auto& o : spec.objects) {
        if (o.initial_location != "player" && spec.room(o.initial_location) == nullptr)
            throw ValidationError("object '" + o.id + "' starts in undefined location '" +
                                  o.initial_location + "'");
        if (!o.unlocks.empty() && spec.object(o.unlocks) == nullptr)
            throw ValidationError("object '" + o.id + "' unlocks undefined object");
        if (!o.climb_to.empty() && spec.room(o.climb_to) == nullptr)
            throw ValidationError("object '" + o.id + "' climbs to undefined room");
        if (!spec.grammar.in_vocabulary(o.id))
            throw ValidationError("object id '" + o.id + "' missing from vocabulary");
        std::string head = head_noun(o.name);
        if (!spec.grammar.in_vocabulary(head))
            throw ValidationError("display noun '" + head + "' missing from vocabulary");
    }
    if (spec.room(spec.start_room) == nullptr)
        throw ValidationError("start room '" + spec.start_room + "' is undefined");
    for (const auto& rule : spec.reward_rules) {
        if (rule.points < 0)
            throw ValidationError("reward rule '" + rule.id +
                                  "' has negative points; use a hazard for penalties");
    }
    int once_total = 0;
    for (const auto& rule : spec.reward_rules)
        if (rule.once) once_total += rule.points;
    if (once_total < spec.max_score)
        throw ValidationError("max_score exceeds the total points of once rules");
}

}  // namespace

GameSpec load_game(const std::string& definition_text) {
    auto sections = parse_sections(definition_text);
    GameSpec spec;
    std::vector<ActionTemplate> templates;
    std::set<std::string> vocab;

    for (const auto& s : sections) {
        if (s.kind == "game") {
            spec.game_id = s.id;
            for (const auto& [k, v] : s.entries) {
                if (k == "goal") spec.goal_description = v;
                else if (k == "max_score") spec.max_score = parse_int(v, s.line_no);
                else if (k == "start") spec.start_room = v;
                else throw ParseError("unknown key '" + k + "' in [game]", s.line_no);
            }
        } else if (s.kind == "room") {
            if (s.id.empty()) throw ParseError("room section needs an id", s.line_no);
            RoomDef room;
            room.id = s.id;
            room.name = s.id;
            for (const auto& [k, v] : s.entries) {
                if (k == "name") room.name = v;
                else if (k == "desc") room.desc = v;
                else if (k == "dark") room.dark = parse_bool(v, s.line_no);
                else if (starts_with(k, "exit ")) {
                    std::string dir = collapse_whitespace(k.substr(5));
                    room.exits[dir] = v;
                } else {
                    throw ParseError("unknown key '" + k + "' in [room]", s.line_no);
                }
            }
            spec.rooms.push_back(std::move(room));
        } else if (s.kind == "object") {
            if (s.id.empty()) throw ParseError("object section needs an id", s.line_no);
            ObjectDef obj;
            obj.id = s.id;
            obj.name = s.id;
            for (const auto& [k, v] : s.entries) {
                if (k == "name") obj.name = v;
                else if (k == "location") obj.initial_location = v;
                else if (k == "portable") obj.portable = parse_bool(v, s.line_no);
                else if (k == "unlocks") obj.unlocks = v;
                else if (k == "climb_to") obj.climb_to = v;
                else if (k == "attributes") {
                    for (const auto& w : tokenize(v)) obj.attributes.insert(w);
                } else {
                    throw ParseError("unknown key '" + k + "' in [object]", s.line_no);
                }
            }
            if (obj.initial_location.empty())
                throw ParseError("object '" + obj.id + "' has no location", s.line_no);
            spec.objects.push_back(std::move(obj));
        } else if (s.kind == "templates") {
            for (const auto& [line_no, text] : s.raw_lines)
                templates.push_back(Grammar::parse_template_line(text, line_no));
        } else if (s.kind == "vocab") {
            for (const auto& [line_no, text] : s.raw_lines) {
                (void)line_no;
                for (const auto& w : tokenize(text)) vocab.insert(w);
            }
        } else if (s.kind == "plurals") {
            for (const auto& [k, v] : s.entries) {
                if (v == "plural") spec.plural_overrides[k] = true;
                else if (v == "singular") spec.plural_overrides[k] = false;
                else throw ParseError("plural override must be 'plural' or 'singular'", s.line_no);
            }
        } else if (s.kind == "reward") {
            RewardRule rule;
            rule.id = s.id.empty() ? "reward" + std::to_string(spec.reward_rules.size()) : s.id;
            for (const auto& [k, v] : s.entries) {
                if (k == "when") rule.when = parse_condition(v, s.line_no);
                else if (k == "points") rule.points = parse_int(v, s.line_no);
                else if (k == "once") rule.once = parse_bool(v, s.line_no);
                else if (k == "message") rule.message = v;
                else throw ParseError("unknown key '" + k + "' in [reward]", s.line_no);
            }
            if (rule.when.atoms.empty())
                throw ParseError("reward rule without a condition", s.line_no);
            spec.reward_rules.push_back(std::move(rule));
        } else if (s.kind == "hazard") {
            HazardRule rule;
            rule.id = s.id.empty() ? "hazard" + std::to_string(spec.hazards.size()) : s.id;
            for (const auto& [k, v] : s.entries) {
                if (k == "when") rule.when = parse_condition(v, s.line_no);
                else if (k == "message") rule.message = v;
                else if (k == "points") rule.points = parse_int(v, s.line_no);
                else throw ParseError("unknown key '" + k + "' in [hazard]", s.line_no);
            }
            if (rule.when.atoms.empty())
                throw ParseError("hazard rule without a condition", s.line_no);
            if (rule.message.empty()) rule.message = "You have met an unfortunate end.";
            spec.hazards.push_back(std::move(rule));
        } else {
            throw ParseError("unknown section '" + s.kind + "'", s.line_no);
        }
    }

    if (spec.game_id.empty()) throw ParseError("missing [game <id>] section", 1);
    if (spec.start_room.empty() && !spec.rooms.empty()) spec.start_room = spec.rooms.front().id;

    // Room ids, object nouns and directions are always in the filler lexicon.
    for (const auto& r : spec.rooms) vocab.insert(r.id);
    for (const auto& o : spec.objects) {
        vocab.insert(o.id);
        vocab.insert(head_noun(o.name));
    }
    for (const auto& d : direction_words()) vocab.insert(d);

    spec.grammar = Grammar(std::move(templates), std::move(vocab));
    validate(spec);
    return spec;
}

// ---------------------------------------------------------------------------
// Rendering

std::string render_room(const GameSpec& spec, const EnvState& state) {
    const RoomDef* room = spec.room(state.room);
    if (room == nullptr) return "Nowhere.";
    if (room->dark && !carries_light(spec, state))
        return "It is pitch black in here. You cannot see a thing.";

    std::ostringstream out;
    out << room->name << ". " << room->desc;
    std::vector<std::string> visible;
    for (const auto& o : spec.objects) {
        if (object_visible(state, o.id)) visible.push_back(with_article(o.name));
    }
    if (!visible.empty()) out << " You can see " << prose_list(visible) << " here.";
    std::vector<std::string> exits;
    for (const auto& d : direction_words()) {
        if (room->exits.count(d)) exits.push_back(d);
    }
    if (!exits.empty()) out << " Exits lead " << prose_list(exits) << ".";
    return out.str();
}

std::string render_inventory(const GameSpec& spec, const EnvState& state) {
    std::vector<std::string> carried;
    for (const auto& o : spec.objects) {
        if (state.inventory.count(o.id)) carried.push_back(with_article(o.name));
    }
    if (carried.empty()) return "You are carrying nothing.";
    return "You are carrying " + prose_list(carried) + ".";
}

// ---------------------------------------------------------------------------
// Lifecycle

std::pair<EnvState, Observation> reset(const GameSpec& spec, std::uint64_t seed) {
    (void)seed;  // built-in games carry no stochastic content
    EnvState state;
    state.room = spec.start_room;
    for (const auto& o : spec.objects) {
        if (o.initial_location == "player") state.inventory.insert(o.id);
        else state.object_locations[o.id] = o.initial_location;
        state.object_attributes[o.id] = o.attributes;
    }
    Observation obs;
    obs.desc = render_room(spec, state);
    obs.feedback = obs.desc;
    obs.inventory_text = render_inventory(spec, state);
    obs.prev_action = "look";
    obs.reward = 0;
    obs.total_score = 0;
    return {state, obs};
}

namespace {

// Applies verb semantics; returns feedback text. Mutates next in place.
std::string apply_action(const GameSpec& spec, EnvState& next, const ActionInstance& inst) {
    const std::string& verb = inst.tmpl->verb();

    auto display = [&](const std::string& id) {
        const ObjectDef* def = spec.object(id);
        return def ? def->name : id;
    };
    // Fillers name objects by id or by display head noun.
    auto resolve_object = [&](const std::string& word) -> std::string {
        if (spec.object(word) != nullptr) return word;
        for (const auto& o : spec.objects) {
            if (head_noun(o.name) == word) return o.id;
        }
        return word;
    };

    if (verb == "look") {
        return render_room(spec, next);
    }
    if (verb == "go") {
        const std::string& dir = inst.fillers[0];
        const RoomDef* room = spec.room(next.room);
        auto it = room->exits.find(dir);
        if (!is_direction(dir) || it == room->exits.end()) return "You can't go that way.";
        std::string from = next.room;
        next.room = it->second;
        return "You walk " + dir + " from the " + from + " to the " + next.room + ".";
    }
    if (verb == "take") {
        std::string obj = resolve_object(inst.fillers[0]);
        const ObjectDef* def = spec.object(obj);
        if (def == nullptr || !object_visible(next, obj)) return "You don't see that here.";
        if (!def->portable) return "You can't take that.";
        next.object_locations.erase(obj);
        next.inventory.insert(obj);
        return "Taken.";
    }
    if (verb == "drop") {
        std::string obj = resolve_object(inst.fillers[0]);
        if (!next.inventory.count(obj)) return "You aren't carrying that.";
        next.inventory.erase(obj);
        next.object_locations[obj] = next.room;
        return "Dropped.";
    }
    if (verb == "open") {
        std::string obj = resolve_object(inst.fillers[0]);
        const ObjectDef* def = spec.object(obj);
        if (def == nullptr || !object_accessible(next, obj)) return "You don't see that here.";
        if (def->portable && !next.inventory.count(obj))
            return "You should pick up the " + display(obj) + " first.";
        if (!has_attr(next, obj, "openable")) return "You can't open that.";
        if (has_attr(next, obj, "locked")) return "The " + display(obj) + " is locked.";
        if (has_attr(next, obj, "open")) return "It's already open.";
        next.object_attributes[obj].insert("open");
        return "You open the " + display(obj) + ".";
    }
    if (verb == "unlock") {
        std::string obj = resolve_object(inst.fillers[0]);
        std::string key = resolve_object(inst.fillers[1]);
        if (spec.object(obj) == nullptr || !object_accessible(next, obj))
            return "You don't see that here.";
        if (!next.inventory.count(key)) return "You aren't carrying " + with_article(key) + ".";
        if (!has_attr(next, obj, "locked")) return "It isn't locked.";
        const ObjectDef* key_def = spec.object(key);
        if (key_def == nullptr || key_def->unlocks != obj) return "It doesn't fit.";
        next.object_attributes[obj].erase("locked");
        return "You unlock the " + display(obj) + " with the " + display(key) + ".";
    }
    if (verb == "climb") {
        std::string obj = resolve_object(inst.fillers[0]);
        const ObjectDef* def = spec.object(obj);
        if (def == nullptr || !object_visible(next, obj)) return "You don't see that here.";
        if (!has_attr(next, obj, "climbable") || def->climb_to.empty())
            return "You can't climb that.";
        std::string from = next.room;
        next.room = def->climb_to;
        return "You climb up from the " + from + " to the " + next.room + ".";
    }
    if (verb == "throw") {
        std::string obj = resolve_object(inst.fillers[0]);
        std::string target = resolve_object(inst.fillers[1]);
        if (!next.inventory.count(obj)) return "You aren't carrying that.";
        if (spec.object(target) == nullptr || !object_accessible(next, target))
            return "You don't see " + with_article(target) + " here.";
        next.inventory.erase(obj);
        next.object_locations[obj] = next.room;
        return "You throw the " + display(obj) + " against the " + display(target) +
               ". It clatters to the floor.";
    }
    return "Nothing happens.";
}

}  // namespace

StepResult step(const GameSpec& spec, const EnvState& state, const std::string& action) {
    StepResult result;
    result.state = state;
    EnvState& next = result.state;
    next.step_index = state.step_index + 1;

    Observation obs;
    obs.prev_action = collapse_whitespace(to_lower(action));
    if (obs.prev_action.empty()) obs.prev_action = "look";

    if (state.done) {
        obs.desc = state.death ? "You have died." : "The story has ended.";
        obs.feedback = "The game is over.";
        obs.inventory_text = render_inventory(spec, next);
        obs.total_score = next.score;
        result.obs = obs;
        result.done = true;
        return result;
    }

    std::string feedback;
    auto parsed = spec.grammar.parse_action(action);
    if (!parsed.has_value()) {
        feedback = generic_failure_feedback();
    } else {
        feedback = apply_action(spec, next, *parsed);
    }

    int reward = 0;
    for (const auto& rule : spec.reward_rules) {
        if (rule.once && next.fired_rewards.count(rule.id)) continue;
        if (eval_condition(spec, next, rule.when)) {
            reward += rule.points;
            next.score += rule.points;
            if (rule.once) next.fired_rewards.insert(rule.id);
            if (!rule.message.empty()) feedback += " " + rule.message;
            feedback += " Your score has just gone up by " + std::to_string(rule.points) +
                        " points.";
        }
    }
    for (const auto& rule : spec.hazards) {
        if (eval_condition(spec, next, rule.when)) {
            next.death = true;
            next.done = true;
            reward += rule.points;
            next.score += rule.points;
            feedback += " " + rule.message;
            break;
        }
    }
    if (!next.death && next.score >= spec.max_score && spec.max_score > 0) {
        next.done = true;
        feedback += " You have achieved the goal.";
    }

    obs.desc = next.death ? "You have died." : render_room(spec, next);
    obs.feedback = collapse_whitespace(feedback);
    obs.inventory_text = render_inventory(spec, next);
    obs.reward = reward;
    obs.total_score = next.score;
    result.obs = obs;
    result.done = next.done;
    return result;
}

// ---------------------------------------------------------------------------
// Action sets

namespace {

const ActionTemplate* find_template(const GameSpec& spec, const std::string& verb) {
    for (const auto& t : spec.grammar.templates())
        if (t.verb() == verb) return &t;
    return nullptr;
}

// Applies one candidate and keeps it if the world reacted.
void try_candidate(const GameSpec& spec, const EnvState& state, const ActionTemplate* tmpl,
                   const std::vector<std::string>& fillers, std::vector<std::string>& out) {
    if (tmpl == nullptr) return;
    ActionInstance inst;
    try {
        inst = spec.grammar.fill(*tmpl, fillers);
    } catch (const std::exception&) {
        return;
    }
    StepResult r = step(spec, state, inst.canonical_text);
    if (state_changed(state, r.state)) out.push_back(inst.canonical_text);
}

}  // namespace

std::vector<std::string> valid_actions(const GameSpec& spec, const EnvState& state) {
    std::vector<std::string> out;
    if (state.done) return out;

    const RoomDef* room = spec.room(state.room);
    const ActionTemplate* t_go = find_template(spec, "go");
    if (t_go && room) {
        for (const auto& d : direction_words())
            if (room->exits.count(d)) try_candidate(spec, state, t_go, {d}, out);
    }
    const ActionTemplate* t_take = find_template(spec, "take");
    const ActionTemplate* t_drop = find_template(spec, "drop");
    const ActionTemplate* t_open = find_template(spec, "open");
    const ActionTemplate* t_climb = find_template(spec, "climb");
    const ActionTemplate* t_unlock = find_template(spec, "unlock");
    const ActionTemplate* t_throw = find_template(spec, "throw");

    // An object is nameable by its id and by its display head noun; both
    // spellings must be probed so the result matches brute-force enumeration.
    auto words_for = [&](const ObjectDef& o) {
        std::set<std::string> words{o.id, head_noun(o.name)};
        return words;
    };

    for (const auto& o : spec.objects) {
        for (const auto& w : words_for(o)) {
            if (object_visible(state, o.id)) {
                if (t_take) try_candidate(spec, state, t_take, {w}, out);
                if (t_climb) try_candidate(spec, state, t_climb, {w}, out);
            }
            if (state.inventory.count(o.id) && t_drop) try_candidate(spec, state, t_drop, {w}, out);
            if (object_accessible(state, o.id)) {
                if (t_open) try_candidate(spec, state, t_open, {w}, out);
                if (t_unlock) {
                    for (const auto& k : spec.objects) {
                        if (!state.inventory.count(k.id)) continue;
                        for (const auto& kw : words_for(k))
                            try_candidate(spec, state, t_unlock, {w, kw}, out);
                    }
                }
                if (t_throw) {
                    for (const auto& held : spec.objects) {
                        if (!state.inventory.count(held.id)) continue;
                        for (const auto& hw : words_for(held))
                            try_candidate(spec, state, t_throw, {hw, w}, out);
                    }
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> valid_actions_brute_force(const GameSpec& spec, const EnvState& state) {
    std::vector<std::string> out;
    if (state.done) return out;
    for (const auto& inst : spec.grammar.enumerate_all()) {
        StepResult r = step(spec, state, inst.canonical_text);
        if (state_changed(state, r.state)) out.push_back(inst.canonical_text);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

int verify_max_score(const GameSpec& spec, std::size_t state_cap) {
    auto [initial, obs0] = reset(spec, 0);
    (void)obs0;
    std::set<std::string> visited;
    std::deque<EnvState> frontier;
    frontier.push_back(initial);
    visited.insert(state_key(initial));
    int best = 0;
    while (!frontier.empty()) {
        EnvState cur = frontier.front();
        frontier.pop_front();
        best = std::max(best, cur.score);
        if (cur.done) continue;
        for (const auto& action : valid_actions(spec, cur)) {
            StepResult r = step(spec, cur, action);
            r.state.step_index = 0;  // step counter is not part of search identity
            std::string key = state_key(r.state);
            if (visited.count(key)) continue;
            if (visited.size() >= state_cap)
                throw ValidationError("reachability search exceeded the state cap");
            visited.insert(key);
            frontier.push_back(r.state);
        }
    }
    if (best != spec.max_score)
        throw ValidationError("declared max_score " + std::to_string(spec.max_score) +
                              " but exhaustive search reaches " + std::to_string(best));
    return best;
}

}  // namespace hexplain
