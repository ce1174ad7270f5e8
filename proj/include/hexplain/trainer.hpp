#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hexplain/engine.hpp"
#include "hexplain/kgstate.hpp"
#include "hexplain/policy.hpp"

namespace hexplain {

enum class RewardMode { GameOnly, GameAndIM };

struct TrainConfig {
    double gamma = 0.9;
    double entropy_coef = 0.03;
    double value_coef = 9.0;
    double template_coef = 3.0;
    double object_coef = 9.0;
    std::size_t buffer_size = 40;
    std::size_t batch_size = 16;  // parallel environment executors
    double learning_rate = 0.003;
    double grad_clip = 40.0;
    std::size_t total_steps = 100000;
    std::size_t max_episode_steps = 100;
    RewardMode reward_mode = RewardMode::GameAndIM;
    double im_coef = 0.1;
    std::uint64_t seed = 0;
    PolicyDims dims;
    std::size_t curve_every = 1000;  // env steps between learning-curve rows
};

// New edges discovered this step; the running union feeds the next call.
// Both outputs are non-negative / monotone by construction.
std::pair<int, KnowledgeGraph> im_reward(const KnowledgeGraph& kg_global,
                                         const KnowledgeGraph& kg_t);

// Discounted returns and advantages over one in-episode fragment. bootstrap
// is the critic's estimate past the fragment end (0 when the episode ended).
std::pair<std::vector<double>, std::vector<double>> compute_returns(
    const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
    double bootstrap);

// One logged transition awaiting the fragment flush.
struct RolloutStep {
    StepTensors tensors;
    double reward = 0.0;
    bool done = false;
    double value_detached = 0.0;
};

struct RolloutBuffer {
    std::vector<RolloutStep> steps;
    std::size_t capacity = 40;
    bool full() const { return steps.size() >= capacity; }
};

struct LossParts {
    Tensor total;
    double template_loss = 0.0;
    double object_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double total_value = 0.0;
};

// total = template_coef * template_loss + object_coef * object_loss
//       + value_coef * value_loss - entropy_coef * entropy
// where the policy terms are advantage-weighted negative log-likelihoods,
// the value term is squared error to returns, and the entropy is over the
// valid actions.
LossParts loss(Tape& tape, const RolloutBuffer& batch, const std::vector<double>& returns,
               const std::vector<double>& advantages, const TrainConfig& config);

struct CurvePoint {
    std::size_t step = 0;
    double episode_score_mean100 = 0.0;
    int max_score_seen = 0;
};

struct TrainResult {
    std::unique_ptr<Policy> policy;
    std::vector<CurvePoint> curve;
    int max_score_seen = 0;
    double final_mean100 = 0.0;
    std::size_t episodes_completed = 0;
};

using CheckpointHook = std::function<void(std::size_t step, const Policy& policy)>;

// Synchronous round-robin training over batch_size environment executors;
// each flushes its fragment to one gradient update. Deterministic given
// (spec, config). Throws DivergenceError on a non-finite loss.
TrainResult train(const GameSpec& spec, const TrainConfig& config,
                  const CheckpointHook& on_curve_point = nullptr);

struct EvalResult {
    double mean_score = 0.0;
    int max_score = 0;
    std::size_t episodes = 0;
};

// Sampled evaluation episodes with dropout off.
EvalResult evaluate(Policy& policy, const GameSpec& spec, std::size_t episodes,
                    std::uint64_t seed, std::size_t max_episode_steps = 100);

struct AdamOptimizer {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 40.0;
    std::vector<std::vector<double>> m, v;
    long t = 0;

    explicit AdamOptimizer(double lr_, double clip) : lr(lr_), grad_clip(clip) {}
    void step(const std::vector<Parameter*>& params);
};

}  // namespace hexplain
