#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "hexplain/builtin_games.hpp"
#include "hexplain/checkpoint.hpp"
#include "hexplain/engine.hpp"
#include "hexplain/errors.hpp"
#include "hexplain/temporal.hpp"
#include "hexplain/text_util.hpp"
#include "hexplain/trainer.hpp"
#include "hexplain/trajstore.hpp"

namespace fs = std::filesystem;
using namespace hexplain;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

// Effective parameters of a run: defaults, then config file entries, then
// command-line overrides. Echoed into the run manifest verbatim.
class RunParams {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    void load_config_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read config file " + path);
        std::stringstream buf;
        buf << in.rdbuf();
        for (const auto& section : parse_sections(buf.str())) {
            for (const auto& [k, v] : section.entries) set(k, v);
        }
    }

    void apply_overrides(const std::vector<std::string>& overrides) {
        for (const auto& o : overrides) {
            auto eq = o.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("override must be key=value: " + o);
            set(collapse_whitespace(o.substr(0, eq)), collapse_whitespace(o.substr(eq + 1)));
        }
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : std::strtod(it->second.c_str(), nullptr);
    }
    long get_long(const std::string& key, long fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : std::stol(it->second);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("HEXPLAIN_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 0;
}

GameSpec load_game_arg(const std::string& game) {
    if (is_builtin_game(game)) return load_builtin(game);
    std::ifstream in(game);
    if (!in) throw std::runtime_error("no built-in game or game file named '" + game + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return load_game(buf.str());
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const RunParams& params) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "manifest.txt");
    out << "# effective run parameters; feed back via --config to reproduce\n";
    out << "[run " << subcommand << "]\n";
    for (const auto& [k, v] : params.values()) out << k << " = " << v << "\n";
}

TrainConfig train_config_from(const RunParams& p) {
    TrainConfig c;
    c.gamma = p.get_double("gamma", c.gamma);
    c.entropy_coef = p.get_double("entropy_coef", c.entropy_coef);
    c.value_coef = p.get_double("value_coef", c.value_coef);
    c.template_coef = p.get_double("template_coef", c.template_coef);
    c.object_coef = p.get_double("object_coef", c.object_coef);
    c.buffer_size = static_cast<std::size_t>(p.get_long("buffer_size", static_cast<long>(c.buffer_size)));
    c.batch_size = static_cast<std::size_t>(p.get_long("batch_size", static_cast<long>(c.batch_size)));
    c.learning_rate = p.get_double("learning_rate", c.learning_rate);
    c.grad_clip = p.get_double("grad_clip", c.grad_clip);
    c.total_steps = static_cast<std::size_t>(p.get_long("steps", static_cast<long>(c.total_steps)));
    c.max_episode_steps =
        static_cast<std::size_t>(p.get_long("max_episode_steps", static_cast<long>(c.max_episode_steps)));
    std::string mode = p.get("reward_mode", "game_and_im");
    if (mode == "game_only") c.reward_mode = RewardMode::GameOnly;
    else if (mode == "game_and_im") c.reward_mode = RewardMode::GameAndIM;
    else throw std::runtime_error("reward_mode must be game_only or game_and_im");
    c.im_coef = p.get_double("im_coef", c.im_coef);
    c.seed = static_cast<std::uint64_t>(p.get_long("seed", 0));
    c.curve_every = static_cast<std::size_t>(p.get_long("curve_every", static_cast<long>(c.curve_every)));
    c.dims.d_text = static_cast<std::size_t>(p.get_long("d_text", static_cast<long>(c.dims.d_text)));
    c.dims.d_emb = static_cast<std::size_t>(p.get_long("d_emb", static_cast<long>(c.dims.d_emb)));
    c.dims.d_sub = static_cast<std::size_t>(p.get_long("d_sub", static_cast<long>(c.dims.d_sub)));
    c.dims.heads = static_cast<std::size_t>(p.get_long("heads", static_cast<long>(c.dims.heads)));
    return c;
}

void write_curve(const fs::path& path, const std::vector<CurvePoint>& curve) {
    std::ofstream out(path);
    out << "step,episode_score_mean100,max_score_seen\n";
    for (const auto& pt : curve) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", pt.episode_score_mean100);
        out << pt.step << "," << buf << "," << pt.max_score_seen << "\n";
    }
}

int cmd_train(const std::string& game, const RunParams& params, const fs::path& out_dir) {
    GameSpec spec = load_game_arg(game);
    TrainConfig config = train_config_from(params);
    write_manifest(out_dir, "train", params);

    TrainResult result = train(spec, config);
    write_curve(out_dir / "curve.csv", result.curve);
    save_parameters_file((out_dir / "checkpoint.ckpt").string(), result.policy->parameters());

    std::cout << "trained " << spec.game_id << " for " << config.total_steps << " steps\n";
    std::cout << "episodes " << result.episodes_completed << ", mean100 " << result.final_mean100
              << ", max score seen " << result.max_score_seen << " / " << spec.max_score << "\n";
    std::cout << "wrote " << (out_dir / "curve.csv").string() << " and "
              << (out_dir / "checkpoint.ckpt").string() << "\n";
    return kExitOk;
}

int cmd_rollout(const std::string& game, const std::string& checkpoint, std::size_t n,
                const RunParams& params, const fs::path& out_dir) {
    GameSpec spec = load_game_arg(game);
    if (!fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint not found: " << checkpoint << "\n";
        return kExitConfig;
    }
    PolicyDims dims;
    dims.d_text = static_cast<std::size_t>(params.get_long("d_text", static_cast<long>(dims.d_text)));
    dims.d_emb = static_cast<std::size_t>(params.get_long("d_emb", static_cast<long>(dims.d_emb)));
    dims.d_sub = static_cast<std::size_t>(params.get_long("d_sub", static_cast<long>(dims.d_sub)));
    dims.heads = static_cast<std::size_t>(params.get_long("heads", static_cast<long>(dims.heads)));
    Policy policy(spec, dims, 0);
    load_parameters_file(checkpoint, policy.parameters());

    RolloutOptions options;
    options.checkpoint_id = fs::path(checkpoint).filename().string();
    options.explanation_k = static_cast<int>(params.get_long("explanation_k", 3));
    options.recency_window = static_cast<int>(params.get_long("recency_window", 10));
    options.max_episode_steps =
        static_cast<std::size_t>(params.get_long("max_episode_steps", 100));
    std::uint64_t seed = static_cast<std::uint64_t>(params.get_long("seed", 0));

    auto trajectories = collect_rollouts(policy, spec, n, seed, options);
    validate_corpus(trajectories, spec);
    write_manifest(out_dir, "rollout", params);
    fs::path corpus = out_dir / (spec.game_id + ".traj");
    save_trajectories(corpus.string(), trajectories);
    std::cout << "wrote " << trajectories.size() << " trajectories to " << corpus.string() << "\n";
    return kExitOk;
}

// The goal step: the explicit index, or the last rewarded step.
std::size_t resolve_goal_step(const Trajectory& traj, const std::string& step_arg) {
    if (step_arg != "goal") return std::stoul(step_arg);
    for (std::size_t i = traj.steps.size(); i-- > 0;) {
        if (traj.steps[i].reward > 0) return i;
    }
    if (traj.steps.empty()) throw std::runtime_error("trajectory has no steps");
    return traj.steps.size() - 1;
}

int cmd_explain(const std::string& corpus_path, long trajectory_index, const std::string& step_arg,
                bool immediate_only, const std::string& format, const RunParams& params,
                std::ostream& out) {
    auto trajectories = load_trajectories(corpus_path);
    if (trajectories.empty()) {
        std::cerr << "error: corpus is empty\n";
        return kExitConfig;
    }
    if (trajectory_index < 0 || trajectory_index >= static_cast<long>(trajectories.size())) {
        std::cerr << "error: trajectory index " << trajectory_index << " out of range (corpus has "
                  << trajectories.size() << ")\n";
        return kExitConfig;
    }
    const Trajectory& traj = trajectories[static_cast<std::size_t>(trajectory_index)];
    std::string game = params.get("game", traj.game_id);
    GameSpec spec = load_game_arg(game);

    if (immediate_only) {
        for (const auto& rec : traj.steps) {
            out << "Step " << rec.step << " (" << rec.location << "): " << rec.action << "\n";
            for (const auto& e : rec.immediate_explanation) out << "  " << e << "\n";
        }
        return kExitOk;
    }

    std::size_t goal;
    try {
        goal = resolve_goal_step(traj, step_arg);
    } catch (const std::exception&) {
        std::cerr << "error: bad step argument '" << step_arg << "'\n";
        return kExitConfig;
    }
    if (goal >= traj.steps.size()) {
        std::cerr << "error: step " << goal << " out of range (trajectory has "
                  << traj.steps.size() << " steps)\n";
        return kExitConfig;
    }

    PipelineParams pp;
    pp.p = params.get_double("p", pp.p);
    pp.k = static_cast<std::size_t>(params.get_long("k", static_cast<long>(pp.k)));
    pp.critic_percentile = params.get_double("critic_percentile", pp.critic_percentile);

    BayesStats stats = build_stats(trajectories);
    ActionModel model = ActionModel::train(trajectories, spec);
    PipelineResult result = explain_goal(stats, model, traj, goal, spec, pp);

    if (format == "json-lines")
        out << render_json_lines(result, spec.game_id, static_cast<std::size_t>(trajectory_index));
    else
        out << render_report(result, spec.game_id, static_cast<std::size_t>(trajectory_index));
    return kExitOk;
}

int cmd_eval(const std::string& game, const std::string& checkpoint, std::size_t episodes,
             const RunParams& params, const fs::path& out_dir) {
    GameSpec spec = load_game_arg(game);
    if (!fs::exists(checkpoint)) {
        std::cerr << "error: checkpoint not found: " << checkpoint << "\n";
        return kExitConfig;
    }
    Policy policy(spec, PolicyDims{}, 0);
    load_parameters_file(checkpoint, policy.parameters());
    std::uint64_t seed = static_cast<std::uint64_t>(params.get_long("seed", 0));
    EvalResult result = evaluate(policy, spec, episodes, seed,
                                 static_cast<std::size_t>(params.get_long("max_episode_steps", 100)));
    write_manifest(out_dir, "eval", params);
    double denom = spec.max_score > 0 ? static_cast<double>(spec.max_score) : 1.0;
    char line[256];
    std::snprintf(line, sizeof line,
                  "Eps. %.2f (%.1f%% of max)  Max %d (%.1f%% of max)  over %zu episodes\n",
                  result.mean_score, 100.0 * result.mean_score / denom, result.max_score,
                  100.0 * result.max_score / denom, result.episodes);
    std::cout << line;
    return kExitOk;
}

int cmd_play(const std::string& game, bool show_kg) {
    GameSpec spec = load_game_arg(game);
    RuleExtractor extractor(spec);
    auto [state, obs] = reset(spec, default_seed());
    KnowledgeGraph kg = update_graph(KnowledgeGraph{}, extractor.extract(obs, state.room), 0);

    std::cout << spec.goal_description << "\n\n" << obs.desc << "\n";
    std::string line;
    while (true) {
        std::cout << "> " << std::flush;
        if (!std::getline(std::cin, line)) break;
        std::string action = collapse_whitespace(to_lower(line));
        if (action.empty()) continue;
        if (action == "quit" || action == "exit") break;
        StepResult r = step(spec, state, action);
        state = r.state;
        kg = update_graph(kg, extractor.extract(r.obs, state.room), state.step_index);
        std::cout << r.obs.feedback << "\n";
        if (r.obs.reward != 0) std::cout << "[score " << r.obs.total_score << "]\n";
        if (show_kg) {
            for (const auto& t : kg.triples())
                std::cout << "  <" << t.subject << ", " << t.relation << ", " << t.object << ">\n";
        }
        if (r.done) {
            std::cout << (state.death ? "*** You have died ***" : "*** You have won ***")
                      << "  final score " << state.score << " / " << spec.max_score << "\n";
            break;
        }
        std::cout << r.obs.desc << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-graph text-game agent with attention explanations"};
    app.require_subcommand(1);

    std::string game = "lanternquest";
    std::string config_file;
    std::string out_dir = "runs/latest";
    std::string checkpoint;
    std::string corpus;
    std::string step_arg = "goal";
    std::string format = "text";
    long trajectory_index = 0;
    std::size_t n_rollouts = 300;
    std::size_t episodes = 100;
    bool immediate_only = false;
    bool show_kg = false;
    std::vector<std::string> overrides;
    long seed_flag = -1;
    long steps_flag = -1;
    double p_flag = -1.0;
    long k_flag = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--game", game, "built-in game id or game definition file");
        cmd->add_option("--config", config_file, "config file (sectioned key=value)");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--set", overrides, "override, key=value (repeatable)");
        cmd->add_option("--seed", seed_flag, "random seed (default HEXPLAIN_SEED or 0)");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a policy");
    add_common(train_cmd);
    train_cmd->add_option("--steps", steps_flag, "total environment steps");

    CLI::App* rollout_cmd = app.add_subcommand("rollout", "collect test-time trajectories");
    add_common(rollout_cmd);
    rollout_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    rollout_cmd->add_option("--n", n_rollouts, "number of trajectories");

    CLI::App* explain_cmd = app.add_subcommand("explain", "temporal explanation from a corpus");
    add_common(explain_cmd);
    explain_cmd->add_option("--corpus", corpus, "trajectory corpus (.traj)")->required();
    explain_cmd->add_option("--trajectory", trajectory_index, "trajectory index in the corpus");
    explain_cmd->add_option("--step", step_arg, "goal step index, or 'goal'");
    explain_cmd->add_flag("--immediate-only", immediate_only, "print per-step commentary instead");
    explain_cmd->add_option("--format", format, "text or json-lines");
    explain_cmd->add_option("--p", p_flag, "conditional probability threshold");
    explain_cmd->add_option("--k", k_flag, "action model top-k");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    eval_cmd->add_option("--episodes", episodes, "evaluation episodes");

    CLI::App* play_cmd = app.add_subcommand("play", "play a game interactively");
    add_common(play_cmd);
    play_cmd->add_flag("--show-kg", show_kg, "print the belief graph each step");

    CLI11_PARSE(app, argc, argv);

    try {
        RunParams params;
        params.set("game", game);
        params.set("seed", std::to_string(default_seed()));
        if (!config_file.empty()) params.load_config_file(config_file);
        params.apply_overrides(overrides);
        if (seed_flag >= 0) params.set("seed", std::to_string(seed_flag));
        if (steps_flag >= 0) params.set("steps", std::to_string(steps_flag));
        if (p_flag >= 0.0) params.set("p", std::to_string(p_flag));
        if (k_flag >= 0) params.set("k", std::to_string(k_flag));
        params.set("game", game);

        if (train_cmd->parsed()) return cmd_train(game, params, out_dir);
        if (rollout_cmd->parsed()) return cmd_rollout(game, checkpoint, n_rollouts, params, out_dir);
        if (explain_cmd->parsed())
            return cmd_explain(corpus, trajectory_index, step_arg, immediate_only, format, params,
                               std::cout);
        if (eval_cmd->parsed()) return cmd_eval(game, checkpoint, episodes, params, out_dir);
        if (play_cmd->parsed()) return cmd_play(game, show_kg);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
