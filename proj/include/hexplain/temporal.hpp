#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hexplain/trajstore.hpp"

namespace hexplain {

// Identity used for all trajectory counting: a digest of the step's
// observation text plus its canonical action.
struct StepKey {
    std::string obs_digest;  // fnv-1a of desc + feedback, lower-cased, ws-collapsed
    std::string action;

    auto operator<=>(const StepKey& other) const = default;

    static StepKey from(const StepRecord& rec);
    std::string to_string() const { return obs_digest + ":" + action; }
};

// Per-trajectory deduplicated occurrence and ordered co-occurrence counts.
struct BayesStats {
    std::map<StepKey, int> count_single;
    std::map<std::pair<StepKey, StepKey>, int> count_pair_ordered;  // (earlier, later)
    int trajectory_count = 0;

    int count(const StepKey& k) const;
    int count_ordered(const StepKey& a, const StepKey& b) const;
};

BayesStats build_stats(const std::vector<Trajectory>& trajectories);

// P(A|B) = C(A and B, A first) / C(B). Throws UnseenStep when C(B) = 0.
double conditional_prob(const BayesStats& stats, const StepKey& a, const StepKey& b);

// Backward chaining from the goal: a step earlier in the trajectory is kept
// when its conditional probability given some already-selected step exceeds
// p; iterated to a fixpoint. Returns selected indices in trajectory order,
// goal excluded.
std::vector<std::size_t> bayes_filter(const BayesStats& stats, const Trajectory& trajectory,
                                      std::size_t goal_index, double p);

// Conditional action frequency table standing in for a learned action
// language model. Context is (location of the queried step, template of the
// anchor action); unseen contexts fall back to global frequencies.
class ActionModel {
public:
    ActionModel() = default;

    static ActionModel train(const std::vector<Trajectory>& trajectories, const GameSpec& spec);

    // Ranked by frequency, ties broken lexicographically; at most k entries.
    std::vector<std::string> top_k(const std::string& location, const std::string& anchor_template,
                                   std::size_t k) const;

    double smoothing_mass = 0.5;

private:
    std::map<std::pair<std::string, std::string>, std::map<std::string, int>> table_;
    std::map<std::string, int> global_;
};

// Keeps candidates whose action the model ranks in the top k for the
// anchor's context.
std::vector<std::size_t> lm_filter(const ActionModel& model, const Trajectory& trajectory,
                                   std::size_t anchor_index, const std::vector<std::size_t>& x1,
                                   std::size_t k, const GameSpec& spec);

// Keeps candidates sharing action entities, newly-added graph entities, or a
// location with the anchor, or carrying reward / extreme critic value.
std::vector<std::size_t> semantic_filter(const std::vector<std::size_t>& x2,
                                         std::size_t anchor_index, const Trajectory& trajectory,
                                         double critic_percentile, const GameSpec& spec);

struct ExplanationBlock {
    std::size_t step = 0;
    std::string location;
    std::string action;
    std::vector<std::string> immediate;
    std::size_t needed_for_step = 0;  // later selected step or the goal
    std::string needed_for_action;
    std::string text;
};

struct TemporalExplanation {
    std::size_t goal_step = 0;
    std::string goal_action;
    std::string goal_location;
    std::vector<ExplanationBlock> blocks;  // trajectory order
    std::string rendered;
};

TemporalExplanation synthesize(std::size_t goal_index, const std::vector<std::size_t>& x3,
                               const Trajectory& trajectory, const BayesStats& stats);

struct PipelineParams {
    double p = 0.5;                // conditional probability threshold
    std::size_t k = 20;            // action model cut
    double critic_percentile = 0.9;
};

struct PipelineResult {
    std::size_t x_size = 0;
    std::vector<std::size_t> x1, x2, x3;
    TemporalExplanation explanation;
    PipelineParams params;
};

PipelineResult explain_goal(const BayesStats& stats, const ActionModel& model,
                            const Trajectory& trajectory, std::size_t goal_index,
                            const GameSpec& spec, const PipelineParams& params);

// Report with a machine-readable key=value header followed by prose blocks.
std::string render_report(const PipelineResult& result, const std::string& game_id,
                          std::size_t trajectory_index);

// One JSON object per line: a header object then one per block.
std::string render_json_lines(const PipelineResult& result, const std::string& game_id,
                              std::size_t trajectory_index);

struct ReportHeader {
    std::string game_id;
    std::size_t trajectory_index = 0;
    std::size_t goal_step = 0;
    std::string goal_action;
    double p = 0.0;
    std::size_t k = 0;
    double critic_percentile = 0.0;
    std::size_t x_size = 0, x1_size = 0, x2_size = 0, x3_size = 0;
    std::vector<std::size_t> selected;
};

// Parses the machine-readable section back; throws SchemaError on malformed
// input.
ReportHeader parse_report_header(const std::string& report);

}  // namespace hexplain
