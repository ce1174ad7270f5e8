#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hexplain/autodiff.hpp"
#include "hexplain/engine.hpp"
#include "hexplain/kgstate.hpp"

namespace hexplain {

struct PolicyDims {
    std::size_t d_text = 100;      // recurrent hidden size
    std::size_t d_emb = 50;        // word embedding size
    std::size_t d_sub = 25;        // graph embedding size
    std::size_t components = 4;    // observation channels
    std::size_t heads = 4;         // attention channels per sub-graph
    std::size_t max_tokens = 12;   // per-channel token truncation
};

// Token index over everything the encoder may see: filler vocabulary, room
// and object names, fixed engine phrasing. Index 0 is the unknown token.
class TokenVocab {
public:
    TokenVocab() = default;
    explicit TokenVocab(const GameSpec& spec);

    std::size_t size() const { return words_.size(); }
    std::size_t id(const std::string& word) const;
    const std::string& word(std::size_t id) const { return words_.at(id); }
    static constexpr std::size_t unk = 0;

private:
    std::vector<std::string> words_;
    std::map<std::string, std::size_t> index_;
};

using Matrix = std::vector<std::vector<double>>;

// Everything recorded about one forward pass; the source for explanations
// and log records. Plain values, detached from any tape.
struct ForwardTrace {
    Matrix o_t;                 // d_text x c
    std::vector<double> g_t;    // d_text
    Matrix h_lstm;              // d_text x c
    Matrix alpha_lstm;          // d_text x c, rows sum to 1
    std::vector<double> q_t;    // d_sub
    struct SubGraphTrace {
        std::vector<std::string> nodes;
        Matrix alpha;                          // n x m, each head column sums to 1
        std::vector<double> alpha_channel_sum; // n, summed over heads
    };
    std::array<SubGraphTrace, SubGraphs::count> sub;
    std::vector<double> v_t;    // d_sub
    std::vector<double> template_dist;
    std::vector<std::vector<double>> object_dists;  // per decoded slot, masked
    double critic_value = 0.0;
    ActionInstance sampled;
};

// Per-episode recurrent state of the text encoder; tensors live on the
// current tape. detach() snapshots plain values for crossing tapes.
struct EncoderCarry {
    std::vector<Tensor> hidden;  // one per observation channel
    std::vector<std::vector<double>> detached;
};

// Tape handles the trainer combines into the loss.
struct StepTensors {
    Tensor template_logprob;               // of the sampled template
    std::vector<Tensor> object_logprobs;   // of the sampled fillers
    Tensor value;
    Tensor entropy;                        // over the valid actions
};

class Policy {
public:
    Policy(const GameSpec& spec, PolicyDims dims, std::uint64_t seed);

    const PolicyDims& dims() const { return dims_; }
    const TokenVocab& tokens() const { return tokens_; }
    const std::vector<std::string>& object_vocab() const { return object_vocab_; }
    const GameSpec& spec() const { return *spec_; }

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    void init_weights(std::uint64_t seed, double stddev = 0.1);
    void zero_weights();

    EncoderCarry initial_carry(Tape& tape) const;
    EncoderCarry rebind_carry(Tape& tape, const EncoderCarry& carry) const;

    // Channel i of the result is the final recurrent state over channel i's
    // tokens, continuing from the carried state.
    std::pair<Tensor, EncoderCarry> encode_observation(Tape& tape, const Observation& obs,
                                                       const EncoderCarry& carry);

    // Full-graph encoder followed by the projection into text space.
    Tensor encode_full_graph(Tape& tape, const KnowledgeGraph& g, bool training, Rng* rng);

    struct FuseResult {
        Tensor h_lstm;      // d_text x c
        Tensor alpha_lstm;  // d_text x c
        Tensor q_raw;       // d_text
    };
    FuseResult fuse_text_graph(Tape& tape, Tensor o_t, Tensor g_t);

    Tensor project_query(Tape& tape, Tensor q_raw);  // d_text -> d_sub

    struct HierResult {
        std::vector<Tensor> alpha;       // per sub-graph [m, n_i]; invalid when empty
        std::vector<std::vector<std::string>> nodes;
        Tensor v_t;
    };
    HierResult hierarchical_attend(Tape& tape, Tensor q_t, const SubGraphs& subgraphs,
                                   bool training, Rng* rng);

    // Decoder state shared by sampling, teacher forcing and the entropy term.
    struct DecodeContext {
        Tensor h_template;
        Tensor template_logdist;
        std::optional<Tensor> mask;  // additive, 0 or -1e9 per object word
        std::map<int, std::pair<Tensor, Tensor>> slot0;  // template -> (h, logdist)
        std::map<std::pair<int, std::size_t>, std::pair<Tensor, Tensor>> slot1;
        bool mask_fallback = false;
    };

    DecodeContext begin_decode(Tape& tape, Tensor v_t, const KnowledgeGraph& graph, bool training,
                               Rng* mask_rng);

    struct SampledAction {
        ActionInstance action;
        int template_index = -1;
        std::vector<std::size_t> filler_ids;       // object vocab indices
        std::vector<std::vector<double>> object_dists;
        Tensor template_logprob;
        std::vector<Tensor> object_logprobs;
    };
    SampledAction sample_action(Tape& tape, DecodeContext& ctx, Rng& rng);

    // Log-probability of an arbitrary grammar instance under the decoder.
    Tensor action_logprob(Tape& tape, DecodeContext& ctx, const ActionInstance& action);

    Tensor valid_action_entropy(Tape& tape, DecodeContext& ctx,
                                const std::vector<ActionInstance>& valid);

    Tensor critic_value(Tape& tape, Tensor v_t);

    // One full step: encode, fuse, attend, decode, estimate value.
    struct ActResult {
        ForwardTrace trace;
        StepTensors tensors;
        EncoderCarry carry;
        DecodeContext decode;
        Tensor v_t;
    };
    ActResult act(Tape& tape, const Observation& obs, const KnowledgeGraph& graph,
                  const SubGraphs& subgraphs, const EncoderCarry& carry,
                  const std::vector<ActionInstance>& valid, Rng& sample_rng, bool training,
                  Rng* dropout_rng);

    double graph_dropout = 0.2;  // on attention edges, training only
    double mask_dropout = 0.1;   // on the object mask, training only

    std::size_t mask_fallback_count = 0;

private:
    std::vector<std::size_t> token_ids(const std::string& text) const;
    Tensor node_features(Tape& tape, const std::vector<std::string>& entities);
    static std::vector<std::pair<std::size_t, std::size_t>> graph_edges(
        const KnowledgeGraph& g, const std::vector<std::string>& entities);

    const GameSpec* spec_ = nullptr;
    PolicyDims dims_;
    TokenVocab tokens_;
    std::vector<std::string> object_vocab_;            // sorted grammar vocabulary
    std::map<std::string, std::size_t> object_index_;

    // weights
    Parameter embedding_;                 // [tokens, d_emb]
    GruParameters text_gru_;              // d_emb -> d_text, shared across channels
    GatLayerParams full_gat_;             // d_emb -> d_sub
    Parameter w_graph_proj_, b_graph_proj_;  // d_sub -> d_text
    Parameter w_l_, b_l_, w_o_, w_g_, b_g_;  // text/graph fusion
    std::array<GatLayerParams, SubGraphs::count> sub_gat_;
    Parameter w_h_, b_h_, w_gp_, w_q_, b_q_;  // hierarchical attention
    Parameter w_query_proj_, b_query_proj_;   // d_text -> d_sub
    GruParameters template_gru_;          // d_sub -> d_text
    Parameter w_template_, b_template_;   // d_text -> templates
    Parameter template_embedding_;        // [templates, d_emb]
    GruParameters object_gru_;            // d_emb -> d_text
    Parameter w_object_, b_object_;       // d_text -> object vocab
    Parameter w_critic_, b_critic_;
};

struct ExplanationItem {
    Triple triple;
    double saliency = 0.0;
    std::string text;
    std::string entity;
    int subgraph = 0;
};

// Top-k valid entities by absolute channel-summed attention, each rendered
// through its most salient incident fact. Valid means: an incident triple was
// added within the recency window, or the entity was observed this step.
std::vector<ExplanationItem> immediate_explanation(
    const ForwardTrace& trace, const SubGraphs& subgraphs, int k, int current_step,
    int recency_window, const std::set<std::string>& observed_entities,
    const PluralFn& is_plural = default_plural);

}  // namespace hexplain
