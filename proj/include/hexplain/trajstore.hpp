#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hexplain/kgstate.hpp"
#include "hexplain/policy.hpp"

namespace hexplain {

// One logged game step: the observation acted on, the belief graph at
// decision time, the chosen action with its immediate explanation, and the
// score/critic bookkeeping.
struct StepRecord {
    int step = 0;
    std::string desc;
    std::string feedback;
    std::string inventory_text;
    std::string prev_action;
    std::vector<Triple> kg_triples;
    std::string action;
    std::vector<std::string> immediate_explanation;
    int game_score = 0;   // total score after the action
    int reward = 0;       // this step's score delta
    double critic_value = 0.0;
    std::string location;  // room where the action was taken
};

enum class TerminalCause { Goal, Death, Truncation };

const char* terminal_cause_name(TerminalCause c);
TerminalCause terminal_cause_from(const std::string& name);

struct Trajectory {
    std::string game_id;
    std::uint64_t seed = 0;
    std::string checkpoint_id;
    std::vector<StepRecord> steps;
    int final_score = 0;
    TerminalCause terminal = TerminalCause::Truncation;
};

struct RolloutOptions {
    std::size_t max_episode_steps = 100;
    int explanation_k = 3;
    int recency_window = 10;
    std::string checkpoint_id = "checkpoint";
};

// n sampled episodes from a frozen policy, with immediate explanations
// embedded per step. Deterministic given seed.
std::vector<Trajectory> collect_rollouts(Policy& policy, const GameSpec& spec, std::size_t n,
                                         std::uint64_t seed,
                                         const RolloutOptions& options = RolloutOptions{});

// Line-delimited UTF-8: one header line, then one line per trajectory header
// and per step. Field-exact round trip, critic values included.
void serialize(std::ostream& out, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> deserialize(std::istream& in);

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> load_trajectories(const std::string& path);

// Checks the record invariants over a whole corpus; throws on violation.
void validate_corpus(const std::vector<Trajectory>& trajectories, const GameSpec& spec);

}  // namespace hexplain
