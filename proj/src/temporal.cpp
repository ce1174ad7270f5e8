#include "hexplain/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "hexplain/errors.hpp"
#include "hexplain/text_util.hpp"

namespace hexplain {

StepKey StepKey::from(const StepRecord& rec) {
    std::string normalized = collapse_whitespace(to_lower(rec.desc + " " + rec.feedback));
    return StepKey{fnv1a_hex(normalized), rec.action};
}

int BayesStats::count(const StepKey& k) const {
    auto it = count_single.find(k);
    return it == count_single.end() ? 0 : it->second;
}

int BayesStats::count_ordered(const StepKey& a, const StepKey& b) const {
    auto it = count_pair_ordered.find({a, b});
    return it == count_pair_ordered.end() ? 0 : it->second;
}

BayesStats build_stats(const std::vector<Trajectory>& trajectories) {
    BayesStats stats;
    stats.trajectory_count = static_cast<int>(trajectories.size());
    for (const auto& traj : trajectories) {
        std::vector<StepKey> keys;
        keys.reserve(traj.steps.size());
        for (const auto& rec : traj.steps) {
            if (rec.action.empty()) continue;
            keys.push_back(StepKey::from(rec));
        }
        std::set<StepKey> seen;
        for (const auto& k : keys) seen.insert(k);
        for (const auto& k : seen) ++stats.count_single[k];

        std::set<std::pair<StepKey, StepKey>> pairs;
        for (std::size_t i = 0; i < keys.size(); ++i)
            for (std::size_t j = i + 1; j < keys.size(); ++j) pairs.insert({keys[i], keys[j]});
        for (const auto& p : pairs) ++stats.count_pair_ordered[p];
    }
    return stats;
}

double conditional_prob(const BayesStats& stats, const StepKey& a, const StepKey& b) {
    int cb = stats.count(b);
    if (cb == 0) throw UnseenStep(b.to_string());
    return static_cast<double>(stats.count_ordered(a, b)) / static_cast<double>(cb);
}

std::vector<std::size_t> bayes_filter(const BayesStats& stats, const Trajectory& trajectory,
                                      std::size_t goal_index, double p) {
    if (goal_index >= trajectory.steps.size())
        throw std::out_of_range("goal step outside the trajectory");
    std::vector<StepKey> keys;
    keys.reserve(trajectory.steps.size());
    for (const auto& rec : trajectory.steps) keys.push_back(StepKey::from(rec));

    std::set<std::size_t> selected{goal_index};
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < goal_index; ++i) {
            if (selected.count(i)) continue;
            for (std::size_t j : selected) {
                if (i >= j) continue;
                double prob;
                try {
                    prob = conditional_prob(stats, keys[i], keys[j]);
                } catch (const UnseenStep&) {
                    continue;
                }
                if (prob > p) {
                    selected.insert(i);
                    changed = true;
                    break;
                }
            }
        }
    }
    selected.erase(goal_index);
    return {selected.begin(), selected.end()};
}

// ---------------------------------------------------------------------------
// Action model

namespace {

std::string template_of(const GameSpec& spec, const std::string& action) {
    auto inst = spec.grammar.parse_action(action);
    return inst.has_value() ? inst->tmpl->id() : action;
}

}  // namespace

ActionModel ActionModel::train(const std::vector<Trajectory>& trajectories, const GameSpec& spec) {
    ActionModel model;
    for (const auto& traj : trajectories) {
        for (std::size_t i = 0; i < traj.steps.size(); ++i) {
            const auto& rec = traj.steps[i];
            if (rec.action.empty()) continue;
            ++model.global_[rec.action];
            if (i + 1 < traj.steps.size()) {
                const auto& next = traj.steps[i + 1];
                if (next.action.empty()) continue;
                auto key = std::make_pair(next.location, template_of(spec, rec.action));
                ++model.table_[key][next.action];
            }
        }
    }
    return model;
}

std::vector<std::string> ActionModel::top_k(const std::string& location,
                                            const std::string& anchor_template,
                                            std::size_t k) const {
    double global_total = 0.0;
    for (const auto& [a, c] : global_) global_total += c;
    if (global_total == 0.0) return {};

    std::map<std::string, double> scores;
    auto it = table_.find({location, anchor_template});
    if (it != table_.end()) {
        for (const auto& [a, c] : it->second) scores[a] += c;
        // smoothing keeps globally common actions reachable in sparse contexts
        for (const auto& [a, c] : global_) scores[a] += smoothing_mass * c / global_total;
    } else {
        for (const auto& [a, c] : global_) scores[a] = static_cast<double>(c);
    }

    std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (const auto& [a, s] : ranked) {
        if (out.size() >= k) break;
        out.push_back(a);
    }
    return out;
}

std::vector<std::size_t> lm_filter(const ActionModel& model, const Trajectory& trajectory,
                                   std::size_t anchor_index, const std::vector<std::size_t>& x1,
                                   std::size_t k, const GameSpec& spec) {
    const auto& anchor = trajectory.steps.at(anchor_index);
    std::string anchor_template = template_of(spec, anchor.action);
    std::vector<std::size_t> out;
    for (std::size_t b : x1) {
        const auto& rec = trajectory.steps.at(b);
        auto top = model.top_k(rec.location, anchor_template, k);
        if (std::find(top.begin(), top.end(), rec.action) != top.end()) out.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Semantic filter

namespace {

std::set<std::string> action_entities(const GameSpec& spec, const std::string& action) {
    std::set<std::string> out;
    auto inst = spec.grammar.parse_action(action);
    if (inst.has_value())
        for (const auto& f : inst->fillers) out.insert(f);
    return out;
}

// Entities of triples present at this step but not the previous one.
std::set<std::string> entities_added_at(const Trajectory& traj, std::size_t index) {
    std::set<Triple> prev;
    if (index > 0)
        prev.insert(traj.steps[index - 1].kg_triples.begin(),
                    traj.steps[index - 1].kg_triples.end());
    std::set<std::string> out;
    for (const auto& t : traj.steps[index].kg_triples) {
        if (prev.count(t)) continue;
        if (t.subject != "player") out.insert(t.subject);
        if (t.object != "player") out.insert(t.object);
    }
    return out;
}

std::set<std::string> locations_of(const Trajectory& traj, std::size_t index) {
    std::set<std::string> out{traj.steps[index].location};
    if (index + 1 < traj.steps.size()) out.insert(traj.steps[index + 1].location);
    return out;
}

bool intersects(const std::set<std::string>& a, const std::set<std::string>& b) {
    for (const auto& x : a)
        if (b.count(x)) return true;
    return false;
}

}  // namespace

std::vector<std::size_t> semantic_filter(const std::vector<std::size_t>& x2,
                                         std::size_t anchor_index, const Trajectory& trajectory,
                                         double critic_percentile, const GameSpec& spec) {
    std::vector<double> abs_values;
    for (const auto& rec : trajectory.steps) abs_values.push_back(std::abs(rec.critic_value));
    std::sort(abs_values.begin(), abs_values.end());
    double threshold = 0.0;
    if (!abs_values.empty()) {
        double rank = critic_percentile * static_cast<double>(abs_values.size() - 1);
        threshold = abs_values[static_cast<std::size_t>(std::ceil(rank))];
    }

    auto anchor_actions = action_entities(spec, trajectory.steps.at(anchor_index).action);
    auto anchor_added = entities_added_at(trajectory, anchor_index);
    auto anchor_locs = locations_of(trajectory, anchor_index);

    std::vector<std::size_t> out;
    for (std::size_t b : x2) {
        const auto& rec = trajectory.steps.at(b);
        bool keep = false;
        if (intersects(anchor_actions, action_entities(spec, rec.action))) keep = true;
        if (!keep && intersects(anchor_added, entities_added_at(trajectory, b))) keep = true;
        if (!keep && intersects(anchor_locs, locations_of(trajectory, b))) keep = true;
        if (!keep && (rec.reward != 0 || std::abs(rec.critic_value) >= threshold)) keep = true;
        if (keep) out.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthesis

TemporalExplanation synthesize(std::size_t goal_index, const std::vector<std::size_t>& x3,
                               const Trajectory& trajectory, const BayesStats& stats) {
    TemporalExplanation out;
    const auto& goal = trajectory.steps.at(goal_index);
    out.goal_step = goal_index;
    out.goal_action = goal.action;
    out.goal_location = goal.location;

    std::vector<StepKey> keys;
    for (const auto& rec : trajectory.steps) keys.push_back(StepKey::from(rec));

    std::vector<std::size_t> ordered = x3;
    std::sort(ordered.begin(), ordered.end());

    std::ostringstream text;
    for (std::size_t idx : ordered) {
        const auto& rec = trajectory.steps.at(idx);
        ExplanationBlock block;
        block.step = idx;
        block.location = rec.location;
        block.action = rec.action;
        block.immediate = rec.immediate_explanation;

        // downstream dependent: the later selected step (or the goal) that
        // most strongly implies this one
        std::size_t best = goal_index;
        double best_p = -1.0;
        for (std::size_t j : ordered) {
            if (j <= idx) continue;
            double p;
            try {
                p = conditional_prob(stats, keys[idx], keys[j]);
            } catch (const UnseenStep&) {
                continue;
            }
            if (p > best_p) {
                best_p = p;
                best = j;
            }
        }
        double goal_p = -1.0;
        try {
            goal_p = conditional_prob(stats, keys[idx], keys[goal_index]);
        } catch (const UnseenStep&) {
        }
        if (goal_p >= best_p) best = goal_index;
        block.needed_for_step = best;
        block.needed_for_action = trajectory.steps.at(best).action;

        std::string because = block.immediate.empty() ? "of what the agent believed here"
                                                      : join(block.immediate, "; ");
        std::ostringstream line;
        line << "Step " << block.step << " (" << block.location << "): " << block.action
             << " — because " << because << "; needed for: " << block.needed_for_action
             << " (step " << block.needed_for_step << ")";
        block.text = line.str();
        text << block.text << "\n";
        out.blocks.push_back(std::move(block));
    }
    text << "Goal (step " << goal_index << ", " << out.goal_location << "): " << out.goal_action
         << " — achieved.";
    out.rendered = text.str();
    return out;
}

PipelineResult explain_goal(const BayesStats& stats, const ActionModel& model,
                            const Trajectory& trajectory, std::size_t goal_index,
                            const GameSpec& spec, const PipelineParams& params) {
    PipelineResult result;
    result.params = params;
    result.x_size = trajectory.steps.size();
    result.x1 = bayes_filter(stats, trajectory, goal_index, params.p);
    result.x2 = lm_filter(model, trajectory, goal_index, result.x1, params.k, spec);
    result.x3 = semantic_filter(result.x2, goal_index, trajectory, params.critic_percentile, spec);
    result.explanation = synthesize(goal_index, result.x3, trajectory, stats);
    return result;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string format_double_hex(double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", d);
    return buf;
}

}  // namespace

std::string render_report(const PipelineResult& result, const std::string& game_id,
                          std::size_t trajectory_index) {
    std::ostringstream out;
    out << "#hexplain-explain v1\n";
    out << "game=" << game_id << "\n";
    out << "trajectory=" << trajectory_index << "\n";
    out << "goal_step=" << result.explanation.goal_step << "\n";
    out << "goal_action=" << result.explanation.goal_action << "\n";
    out << "p=" << format_double_hex(result.params.p) << "\n";
    out << "k=" << result.params.k << "\n";
    out << "critic_percentile=" << format_double_hex(result.params.critic_percentile) << "\n";
    out << "sizes=" << result.x_size << "," << result.x1.size() << "," << result.x2.size() << ","
        << result.x3.size() << "\n";
    std::vector<std::string> sel;
    for (auto i : result.x3) sel.push_back(std::to_string(i));
    out << "selected=" << join(sel, ",") << "\n";
    out << "---\n";
    out << result.explanation.rendered << "\n";
    return out.str();
}

std::string render_json_lines(const PipelineResult& result, const std::string& game_id,
                              std::size_t trajectory_index) {
    std::ostringstream out;
    nlohmann::json header;
    header["game"] = game_id;
    header["trajectory"] = trajectory_index;
    header["goal_step"] = result.explanation.goal_step;
    header["goal_action"] = result.explanation.goal_action;
    header["p"] = result.params.p;
    header["k"] = result.params.k;
    header["critic_percentile"] = result.params.critic_percentile;
    header["sizes"] = {result.x_size, result.x1.size(), result.x2.size(), result.x3.size()};
    header["selected"] = result.x3;
    out << header.dump() << "\n";
    for (const auto& block : result.explanation.blocks) {
        nlohmann::json j;
        j["step"] = block.step;
        j["location"] = block.location;
        j["action"] = block.action;
        j["immediate"] = block.immediate;
        j["needed_for_step"] = block.needed_for_step;
        j["needed_for_action"] = block.needed_for_action;
        j["text"] = block.text;
        out << j.dump() << "\n";
    }
    return out.str();
}

ReportHeader parse_report_header(const std::string& report) {
    std::istringstream in(report);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw SchemaError("empty report", 1);
    ++line_no;
    if (line != "#hexplain-explain v1") throw SchemaError("bad report magic", line_no);

    ReportHeader header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line == "---") return header;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw SchemaError("header line without '='", line_no);
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        try {
            if (key == "game") header.game_id = value;
            else if (key == "trajectory") header.trajectory_index = std::stoul(value);
            else if (key == "goal_step") header.goal_step = std::stoul(value);
            else if (key == "goal_action") header.goal_action = value;
            else if (key == "p") header.p = std::strtod(value.c_str(), nullptr);
            else if (key == "k") header.k = std::stoul(value);
            else if (key == "critic_percentile")
                header.critic_percentile = std::strtod(value.c_str(), nullptr);
            else if (key == "sizes") {
                std::istringstream vs(value);
                std::string part;
                std::vector<std::size_t> sizes;
                while (std::getline(vs, part, ',')) sizes.push_back(std::stoul(part));
                if (sizes.size() != 4) throw SchemaError("sizes needs 4 entries", line_no);
                header.x_size = sizes[0];
                header.x1_size = sizes[1];
                header.x2_size = sizes[2];
                header.x3_size = sizes[3];
            } else if (key == "selected") {
                if (!value.empty()) {
                    std::istringstream vs(value);
                    std::string part;
                    while (std::getline(vs, part, ','))
                        header.selected.push_back(std::stoul(part));
                }
            } else {
                throw SchemaError("unknown header key '" + key + "'", line_no);
            }
        } catch (const SchemaError&) {
            throw;
        } catch (const std::exception&) {
            throw SchemaError("bad value for '" + key + "'", line_no);
        }
    }
    throw SchemaError("report missing '---' separator", line_no);
}

}  // namespace hexplain
