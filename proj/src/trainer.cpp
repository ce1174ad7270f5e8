#include "hexplain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "hexplain/errors.hpp"

namespace hexplain {

std::pair<int, KnowledgeGraph> im_reward(const KnowledgeGraph& kg_global,
                                         const KnowledgeGraph& kg_t) {
    int fresh = 0;
    std::set<Triple> merged = kg_global.triples();
    for (const auto& t : kg_t.triples()) {
        if (merged.insert(t).second) ++fresh;
    }
    return {fresh, KnowledgeGraph::from_triples(merged)};
}

std::pair<std::vector<double>, std::vector<double>> compute_returns(
    const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
    double bootstrap) {
    if (rewards.size() != values.size())
        throw std::invalid_argument("rewards and values must have equal length");
    std::vector<double> returns(rewards.size());
    double running = bootstrap;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        running = rewards[i] + gamma * running;
        returns[i] = running;
    }
    std::vector<double> advantages(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) advantages[i] = returns[i] - values[i];
    return {returns, advantages};
}

LossParts loss(Tape& tape, const RolloutBuffer& batch, const std::vector<double>& returns,
               const std::vector<double>& advantages, const TrainConfig& config) {
    std::size_t n = batch.steps.size();
    if (n == 0) throw std::invalid_argument("empty rollout buffer");
    if (returns.size() != n || advantages.size() != n)
        throw std::invalid_argument("returns/advantages do not match the buffer");

    Tensor template_loss = tape.scalar(0.0);
    Tensor object_loss = tape.scalar(0.0);
    Tensor value_loss = tape.scalar(0.0);
    Tensor entropy = tape.scalar(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const RolloutStep& s = batch.steps[i];
        double adv = advantages[i];
        template_loss = tape.add(template_loss, tape.scale(s.tensors.template_logprob, -adv));
        for (const Tensor& lp : s.tensors.object_logprobs)
            object_loss = tape.add(object_loss, tape.scale(lp, -adv));
        Tensor err = tape.add_scalar(s.tensors.value, -returns[i]);
        value_loss = tape.add(value_loss, tape.square(err));
        entropy = tape.add(entropy, s.tensors.entropy);
    }
    double inv_n = 1.0 / static_cast<double>(n);
    template_loss = tape.scale(template_loss, inv_n);
    object_loss = tape.scale(object_loss, inv_n);
    value_loss = tape.scale(value_loss, inv_n);
    entropy = tape.scale(entropy, inv_n);

    Tensor total = tape.scale(template_loss, config.template_coef);
    total = tape.add(total, tape.scale(object_loss, config.object_coef));
    total = tape.add(total, tape.scale(value_loss, config.value_coef));
    total = tape.sub(total, tape.scale(entropy, config.entropy_coef));

    LossParts parts;
    parts.total = total;
    parts.template_loss = tape.scalar_value(template_loss);
    parts.object_loss = tape.scalar_value(object_loss);
    parts.value_loss = tape.scalar_value(value_loss);
    parts.entropy = tape.scalar_value(entropy);
    parts.total_value = tape.scalar_value(total);
    return parts;
}

void AdamOptimizer::step(const std::vector<Parameter*>& params) {
    if (m.empty()) {
        for (Parameter* p : params) {
            m.emplace_back(p->size(), 0.0);
            v.emplace_back(p->size(), 0.0);
        }
    }
    double norm_sq = 0.0;
    for (Parameter* p : params)
        for (double g : p->grad) norm_sq += g * g;
    double norm = std::sqrt(norm_sq);
    double scale = (grad_clip > 0.0 && norm > grad_clip) ? grad_clip / norm : 1.0;

    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter* p = params[i];
        for (std::size_t j = 0; j < p->size(); ++j) {
            double g = p->grad[j] * scale;
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
            double mhat = m[i][j] / bc1;
            double vhat = v[i][j] / bc2;
            p->value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

std::vector<ActionInstance> parse_valid(const GameSpec& spec,
                                        const std::vector<std::string>& texts) {
    std::vector<ActionInstance> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        auto inst = spec.grammar.parse_action(t);
        if (inst.has_value()) out.push_back(*inst);
    }
    return out;
}

// One environment executor: world state, belief graph, reward bookkeeping
// and the encoder carry between fragments.
struct EnvSlot {
    EnvState state;
    Observation obs;
    KnowledgeGraph kg;
    KnowledgeGraph kg_global;
    std::vector<std::vector<double>> carry_detached;
    Rng sample_rng;
    Rng dropout_rng;
    std::size_t episode_steps = 0;

    EnvSlot() : sample_rng(0), dropout_rng(0) {}
};

void reset_slot(const GameSpec& spec, const RuleExtractor& extractor, EnvSlot& slot,
                const Policy& policy, std::uint64_t seed) {
    auto [state, obs] = reset(spec, seed);
    slot.state = state;
    slot.obs = obs;
    slot.kg = update_graph(KnowledgeGraph{}, extractor.extract(obs, state.room), 0);
    slot.kg_global = KnowledgeGraph{};
    slot.carry_detached.assign(policy.dims().components,
                               std::vector<double>(policy.dims().d_text, 0.0));
    slot.episode_steps = 0;
}

// Critic-only forward used to bootstrap truncated fragments.
double state_value(Policy& policy, const Observation& obs, const KnowledgeGraph& kg,
                   const std::vector<std::vector<double>>& carry_detached) {
    Tape tape;
    EncoderCarry carry;
    carry.detached = carry_detached;
    carry = policy.rebind_carry(tape, carry);
    auto [o_t, carry2] = policy.encode_observation(tape, obs, carry);
    (void)carry2;
    Tensor g_t = policy.encode_full_graph(tape, kg, false, nullptr);
    auto fuse = policy.fuse_text_graph(tape, o_t, g_t);
    Tensor q_t = policy.project_query(tape, fuse.q_raw);
    SubGraphs subs = partition(kg);
    auto hier = policy.hierarchical_attend(tape, q_t, subs, false, nullptr);
    return tape.scalar_value(policy.critic_value(tape, hier.v_t));
}

}  // namespace

TrainResult train(const GameSpec& spec, const TrainConfig& config,
                  const CheckpointHook& on_curve_point) {
    TrainResult result;
    result.policy = std::make_unique<Policy>(spec, config.dims, config.seed);
    Policy& policy = *result.policy;
    auto params = policy.parameters();
    AdamOptimizer opt(config.learning_rate, config.grad_clip);
    RuleExtractor extractor(spec);

    std::size_t env_count = std::max<std::size_t>(1, config.batch_size);
    std::vector<EnvSlot> slots(env_count);
    for (std::size_t e = 0; e < env_count; ++e) {
        slots[e].sample_rng = Rng(config.seed * 0x9E3779B97F4A7C15ull + 2 * e + 1);
        slots[e].dropout_rng = Rng(config.seed * 0xBF58476D1CE4E5B9ull + 2 * e + 2);
        reset_slot(spec, extractor, slots[e], policy, config.seed);
    }

    std::deque<int> recent_scores;
    auto mean100 = [&recent_scores] {
        if (recent_scores.empty()) return 0.0;
        double total = 0.0;
        for (int s : recent_scores) total += s;
        return total / static_cast<double>(recent_scores.size());
    };

    std::size_t steps_done = 0;
    std::size_t next_curve = config.curve_every;
    bool learning = config.learning_rate != 0.0;

    while (steps_done < config.total_steps) {
        for (std::size_t e = 0; e < env_count && steps_done < config.total_steps; ++e) {
            EnvSlot& slot = slots[e];
            Tape tape;
            EncoderCarry carry;
            carry.detached = slot.carry_detached;
            carry = policy.rebind_carry(tape, carry);

            RolloutBuffer buffer;
            buffer.capacity = config.buffer_size;
            bool episode_ended = false;

            while (!buffer.full() && !episode_ended && steps_done < config.total_steps) {
                SubGraphs subs = partition(slot.kg);
                auto valid = parse_valid(spec, valid_actions(spec, slot.state));
                auto act = policy.act(tape, slot.obs, slot.kg, subs, carry, valid,
                                      slot.sample_rng, learning, &slot.dropout_rng);
                carry = act.carry;

                StepResult sr = step(spec, slot.state, act.trace.sampled.canonical_text);
                slot.state = sr.state;
                slot.obs = sr.obs;
                slot.kg = update_graph(slot.kg, extractor.extract(sr.obs, sr.state.room),
                                       sr.state.step_index);
                double reward = sr.obs.reward;
                if (config.reward_mode == RewardMode::GameAndIM) {
                    auto [fresh, merged] = im_reward(slot.kg_global, slot.kg);
                    slot.kg_global = std::move(merged);
                    reward += config.im_coef * fresh;
                }

                RolloutStep rstep;
                rstep.tensors = act.tensors;
                rstep.reward = reward;
                rstep.value_detached = tape.scalar_value(act.tensors.value);
                ++slot.episode_steps;
                ++steps_done;

                bool truncated = slot.episode_steps >= config.max_episode_steps;
                rstep.done = sr.done;
                buffer.steps.push_back(rstep);

                if (sr.done || truncated) {
                    recent_scores.push_back(slot.state.score);
                    if (recent_scores.size() > 100) recent_scores.pop_front();
                    result.max_score_seen = std::max(result.max_score_seen, slot.state.score);
                    ++result.episodes_completed;
                    episode_ended = true;
                }
            }
            if (buffer.steps.empty()) continue;

            double bootstrap = 0.0;
            if (!episode_ended) {
                bootstrap = state_value(policy, slot.obs, slot.kg, carry.detached);
            } else if (buffer.steps.back().done) {
                bootstrap = 0.0;  // terminal
            } else {
                bootstrap = 0.0;  // truncation counts as episode end for returns
            }

            std::vector<double> rewards, values;
            for (const auto& s : buffer.steps) {
                rewards.push_back(s.reward);
                values.push_back(s.value_detached);
            }
            auto [returns, advantages] = compute_returns(rewards, values, config.gamma, bootstrap);

            if (learning) {
                LossParts parts = loss(tape, buffer, returns, advantages, config);
                if (!std::isfinite(parts.total_value)) {
                    std::ostringstream dump;
                    dump << "loss=" << parts.total_value << " template=" << parts.template_loss
                         << " object=" << parts.object_loss << " value=" << parts.value_loss
                         << " entropy=" << parts.entropy << " fragment_len="
                         << buffer.steps.size() << " env=" << e << " step=" << steps_done;
                    throw DivergenceError(dump.str());
                }
                for (Parameter* p : params) p->zero_grad();
                tape.backward(parts.total);
                opt.step(params);
            }

            slot.carry_detached = carry.detached;
            if (episode_ended) reset_slot(spec, extractor, slot, policy, config.seed);

            if (steps_done >= next_curve || steps_done >= config.total_steps) {
                CurvePoint pt{steps_done, mean100(), result.max_score_seen};
                result.curve.push_back(pt);
                if (on_curve_point) on_curve_point(steps_done, policy);
                while (next_curve <= steps_done) next_curve += config.curve_every;
            }
        }
    }
    if (result.curve.empty() || result.curve.back().step != steps_done) {
        result.curve.push_back(CurvePoint{steps_done, mean100(), result.max_score_seen});
    }
    result.final_mean100 = mean100();
    return result;
}

EvalResult evaluate(Policy& policy, const GameSpec& spec, std::size_t episodes,
                    std::uint64_t seed, std::size_t max_episode_steps) {
    EvalResult result;
    result.episodes = episodes;
    RuleExtractor extractor(spec);
    Rng rng(seed * 0x2545F4914F6CDD1Dull + 1);
    double total = 0.0;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        auto [state, obs] = reset(spec, seed);
        KnowledgeGraph kg = update_graph(KnowledgeGraph{}, extractor.extract(obs, state.room), 0);
        std::vector<std::vector<double>> carry_detached(
            policy.dims().components, std::vector<double>(policy.dims().d_text, 0.0));
        for (std::size_t t = 0; t < max_episode_steps && !state.done; ++t) {
            Tape tape;
            EncoderCarry carry;
            carry.detached = carry_detached;
            carry = policy.rebind_carry(tape, carry);
            SubGraphs subs = partition(kg);
            auto valid = parse_valid(spec, valid_actions(spec, state));
            auto act = policy.act(tape, obs, kg, subs, carry, valid, rng, false, nullptr);
            carry_detached = act.carry.detached;
            StepResult sr = step(spec, state, act.trace.sampled.canonical_text);
            state = sr.state;
            obs = sr.obs;
            kg = update_graph(kg, extractor.extract(obs, state.room), state.step_index);
        }
        total += state.score;
        result.max_score = std::max(result.max_score, state.score);
    }
    result.mean_score = episodes == 0 ? 0.0 : total / static_cast<double>(episodes);
    return result;
}

}  // namespace hexplain
