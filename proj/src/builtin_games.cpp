#include "hexplain/builtin_games.hpp"

#include <map>
#include <sstream>
#include <stdexcept>

#include "hexplain/text_util.hpp"
#include "builtin_games.inc"

namespace hexplain {

namespace {

const std::map<std::string, const char*>& definitions() {
    static const std::map<std::string, const char*> table = {
        {"lanternquest", kLanternquestDefinition},
        {"eggtree", kEggtreeDefinition},
        {"twokeys", kTwokeysDefinition},
    };
    return table;
}

const std::map<std::string, const char*>& walkthroughs() {
    static const std::map<std::string, const char*> table = {
        {"lanternquest", kLanternquestWalkthrough},
        {"eggtree", kEggtreeWalkthrough},
        {"twokeys", kTwokeysWalkthrough},
    };
    return table;
}

}  // namespace

std::vector<std::string> builtin_game_ids() { return {"lanternquest", "eggtree", "twokeys"}; }

bool is_builtin_game(const std::string& id) { return definitions().count(id) > 0; }

const std::string& builtin_game_definition(const std::string& id) {
    auto it = definitions().find(id);
    if (it == definitions().end()) throw std::out_of_range("no built-in game named '" + id + "'");
    static std::map<std::string, std::string> cache;
    auto [pos, inserted] = cache.emplace(id, it->second);
    return pos->second;
}

GameSpec load_builtin(const std::string& id) {
    GameSpec spec = load_game(builtin_game_definition(id));
    verify_max_score(spec);
    return spec;
}

std::vector<std::string> builtin_walkthrough(const std::string& id) {
    auto it = walkthroughs().find(id);
    if (it == walkthroughs().end())
        throw std::out_of_range("no built-in walkthrough named '" + id + "'");
    std::vector<std::string> actions;
    std::istringstream in(it->second);
    std::string line;
    while (std::getline(in, line)) {
        std::string trimmed = collapse_whitespace(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        actions.push_back(trimmed);
    }
    return actions;
}

}  // namespace hexplain
