#pragma once

#include <string>
#include <vector>

#include "hexplain/engine.hpp"

namespace hexplain {

std::vector<std::string> builtin_game_ids();

bool is_builtin_game(const std::string& id);

// Definition text identical to the games/<id>.game fixture.
const std::string& builtin_game_definition(const std::string& id);

// Loads a built-in game and runs the exhaustive reachability check on it.
GameSpec load_builtin(const std::string& id);

// Scripted action sequence reaching the game's max_score.
std::vector<std::string> builtin_walkthrough(const std::string& id);

}  // namespace hexplain
