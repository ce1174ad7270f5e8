#include "hexplain/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hexplain/errors.hpp"
#include "hexplain/text_util.hpp"

namespace hexplain {

namespace {

// Fixed engine phrasing the encoder should not treat as unknown words.
const char* kEnginePhrases =
    "you walk climb up from the to taken dropped you are carrying nothing "
    "it is pitch black in here you cannot see a thing exits lead you can see here "
    "that's not something you can do here your score has just gone up by points "
    "the game is over the story has ended you have died you open the it's already open "
    "is locked you aren't carrying that you can't go that way you unlock the with the "
    "you should pick up the first it doesn't fit it isn't locked you don't see that here "
    "you can't take open climb that you throw the against the it clatters to the floor "
    "nothing happens you have achieved the goal look and a an i am in now have";

}  // namespace

TokenVocab::TokenVocab(const GameSpec& spec) {
    std::set<std::string> words;
    auto eat = [&](const std::string& text) {
        for (const auto& w : tokenize(text)) words.insert(w);
    };
    eat(kEnginePhrases);
    eat(spec.goal_description);
    for (const auto& r : spec.rooms) {
        eat(r.id);
        eat(r.name);
        eat(r.desc);
    }
    for (const auto& o : spec.objects) {
        eat(o.id);
        eat(o.name);
        for (const auto& a : o.attributes) eat(a);
    }
    for (const auto& rule : spec.reward_rules) {
        eat(rule.message);
        eat(std::to_string(rule.points));
    }
    for (const auto& rule : spec.hazards) {
        eat(rule.message);
        eat(std::to_string(rule.points));
    }
    for (const auto& w : spec.grammar.vocabulary()) words.insert(w);
    for (const auto& t : spec.grammar.templates()) {
        for (const auto& v : t.verb_aliases) words.insert(v);
        for (const auto& p : t.preposition_aliases) words.insert(p);
    }
    words.insert("interactable");
    words.insert("open");

    words_.push_back("<unk>");
    for (const auto& w : words) {
        index_[w] = words_.size();
        words_.push_back(w);
    }
}

std::size_t TokenVocab::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? unk : it->second;
}

// ---------------------------------------------------------------------------

Policy::Policy(const GameSpec& spec, PolicyDims dims, std::uint64_t seed)
    : spec_(&spec), dims_(dims), tokens_(spec) {
    for (const auto& w : spec.grammar.vocabulary()) {
        object_index_[w] = object_vocab_.size();
        object_vocab_.push_back(w);
    }
    std::size_t n_templates = spec.grammar.templates().size();
    std::size_t v = object_vocab_.size();

    embedding_ = Parameter("embedding", {tokens_.size(), dims_.d_emb});
    text_gru_ = GruParameters("text_gru", dims_.d_emb, dims_.d_text);
    full_gat_ = GatLayerParams("full_gat", dims_.d_emb, dims_.d_sub, dims_.heads);
    w_graph_proj_ = Parameter("graph_proj.w", {dims_.d_text, dims_.d_sub});
    b_graph_proj_ = Parameter("graph_proj.b", {dims_.d_text});
    w_l_ = Parameter("fuse.w_l", {dims_.d_text, dims_.d_text});
    b_l_ = Parameter("fuse.b_l", {dims_.d_text});
    w_o_ = Parameter("fuse.w_o", {dims_.d_text, dims_.d_text});
    w_g_ = Parameter("fuse.w_g", {dims_.d_text, dims_.d_text});
    b_g_ = Parameter("fuse.b_g", {dims_.d_text});
    for (int i = 0; i < SubGraphs::count; ++i)
        sub_gat_[static_cast<std::size_t>(i)] =
            GatLayerParams(std::string("sub_gat.") + SubGraphs::view_name(i), dims_.d_emb,
                           dims_.d_sub, dims_.heads);
    w_h_ = Parameter("hier.w_h", {dims_.heads, dims_.d_sub});
    b_h_ = Parameter("hier.b_h", {dims_.heads});
    w_gp_ = Parameter("hier.w_gp", {dims_.d_sub, dims_.d_sub});
    w_q_ = Parameter("hier.w_q", {dims_.d_sub, dims_.d_sub});
    b_q_ = Parameter("hier.b_q", {dims_.d_sub});
    w_query_proj_ = Parameter("query_proj.w", {dims_.d_sub, dims_.d_text});
    b_query_proj_ = Parameter("query_proj.b", {dims_.d_sub});
    template_gru_ = GruParameters("template_gru", dims_.d_sub, dims_.d_text);
    w_template_ = Parameter("template_head.w", {n_templates, dims_.d_text});
    b_template_ = Parameter("template_head.b", {n_templates});
    template_embedding_ = Parameter("template_embedding", {n_templates, dims_.d_emb});
    object_gru_ = GruParameters("object_gru", dims_.d_emb, dims_.d_text);
    w_object_ = Parameter("object_head.w", {v, dims_.d_text});
    b_object_ = Parameter("object_head.b", {v});
    w_critic_ = Parameter("critic.w", {1, dims_.d_sub});
    b_critic_ = Parameter("critic.b", {1});

    init_weights(seed);
}

std::vector<Parameter*> Policy::parameters() {
    std::vector<Parameter*> out;
    out.push_back(&embedding_);
    text_gru_.collect(out);
    full_gat_.collect(out);
    out.push_back(&w_graph_proj_);
    out.push_back(&b_graph_proj_);
    for (Parameter* p : {&w_l_, &b_l_, &w_o_, &w_g_, &b_g_}) out.push_back(p);
    for (auto& g : sub_gat_) g.collect(out);
    for (Parameter* p : {&w_h_, &b_h_, &w_gp_, &w_q_, &b_q_, &w_query_proj_, &b_query_proj_})
        out.push_back(p);
    template_gru_.collect(out);
    out.push_back(&w_template_);
    out.push_back(&b_template_);
    out.push_back(&template_embedding_);
    object_gru_.collect(out);
    out.push_back(&w_object_);
    out.push_back(&b_object_);
    out.push_back(&w_critic_);
    out.push_back(&b_critic_);
    return out;
}

std::vector<const Parameter*> Policy::parameters() const {
    auto mut = const_cast<Policy*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

void Policy::init_weights(std::uint64_t seed, double stddev) {
    Rng rng(seed);
    for (Parameter* p : parameters()) p->fill_normal(rng, stddev);
}

void Policy::zero_weights() {
    for (Parameter* p : parameters()) std::fill(p->value.begin(), p->value.end(), 0.0);
}

std::vector<std::size_t> Policy::token_ids(const std::string& text) const {
    std::vector<std::size_t> ids;
    for (const auto& w : tokenize(text)) {
        if (ids.size() >= dims_.max_tokens) break;
        ids.push_back(tokens_.id(w));
    }
    return ids;
}

EncoderCarry Policy::initial_carry(Tape& tape) const {
    EncoderCarry carry;
    for (std::size_t i = 0; i < dims_.components; ++i) {
        carry.hidden.push_back(tape.zeros({dims_.d_text}));
        carry.detached.emplace_back(dims_.d_text, 0.0);
    }
    return carry;
}

EncoderCarry Policy::rebind_carry(Tape& tape, const EncoderCarry& carry) const {
    EncoderCarry out;
    for (std::size_t i = 0; i < carry.detached.size(); ++i) {
        out.hidden.push_back(tape.constant({dims_.d_text}, carry.detached[i]));
        out.detached.push_back(carry.detached[i]);
    }
    return out;
}

std::pair<Tensor, EncoderCarry> Policy::encode_observation(Tape& tape, const Observation& obs,
                                                           const EncoderCarry& carry) {
    const std::string components[4] = {obs.desc, obs.feedback, obs.inventory_text,
                                       obs.prev_action};
    Tensor table = tape.leaf(embedding_);
    auto gru = text_gru_.bind(tape);
    EncoderCarry next;
    std::vector<Tensor> columns;
    for (std::size_t i = 0; i < dims_.components; ++i) {
        Tensor h = carry.hidden[i];
        auto ids = token_ids(components[i]);
        if (!ids.empty()) {
            Tensor emb = tape.embed(table, ids);
            for (std::size_t k = 0; k < ids.size(); ++k)
                h = tape.gru_step(gru, tape.row(emb, k), h);
        }
        columns.push_back(h);
        next.hidden.push_back(h);
        next.detached.push_back(tape.value(h));
    }
    return {tape.stack_columns(columns), next};
}

Tensor Policy::node_features(Tape& tape, const std::vector<std::string>& entities) {
    std::vector<std::size_t> ids;
    ids.reserve(entities.size());
    for (const auto& e : entities) ids.push_back(tokens_.id(e));
    return tape.embed(tape.leaf(embedding_), ids);
}

std::vector<std::pair<std::size_t, std::size_t>> Policy::graph_edges(
    const KnowledgeGraph& g, const std::vector<std::string>& entities) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < entities.size(); ++i) index[entities[i]] = i;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& t : g.triples()) {
        auto a = index.find(t.subject);
        auto b = index.find(t.object);
        if (a == index.end() || b == index.end()) continue;
        edges.emplace_back(a->second, b->second);
        edges.emplace_back(b->second, a->second);
    }
    return edges;
}

Tensor Policy::encode_full_graph(Tape& tape, const KnowledgeGraph& g, bool training, Rng* rng) {
    Tensor pooled;
    if (g.entities().empty()) {
        pooled = tape.zeros({dims_.d_sub});
    } else {
        Tensor feats = node_features(tape, g.entities());
        auto edges = graph_edges(g, g.entities());
        double rate = training ? graph_dropout : 0.0;
        auto gat = gat_forward(tape, feats, edges, full_gat_, rate, rng);
        Tensor summed = tape.sum_cols(gat.node_embeddings);
        pooled = tape.scale(summed, 1.0 / static_cast<double>(g.entities().size()));
    }
    return tape.linear(tape.leaf(w_graph_proj_), tape.leaf(b_graph_proj_), pooled);
}

Policy::FuseResult Policy::fuse_text_graph(Tape& tape, Tensor o_t, Tensor g_t) {
    const auto& oshape = tape.shape(o_t);
    if (oshape.size() != 2 || oshape[0] != dims_.d_text)
        throw ShapeMismatch("fuse_text_graph expects o_t of [d_text, c]");
    Tensor g_lin = tape.add(tape.matvec(tape.leaf(w_g_), g_t), tape.leaf(b_g_));
    Tensor h = tape.tanh(tape.add_broadcast(tape.matmul(tape.leaf(w_o_), o_t), g_lin));
    Tensor scores = tape.add_broadcast(tape.matmul(tape.leaf(w_l_), h), tape.leaf(b_l_));
    Tensor alpha = tape.softmax_rows(scores);
    Tensor q_raw = tape.add(g_t, tape.sum_rows(tape.mul(alpha, o_t)));
    return FuseResult{h, alpha, q_raw};
}

Tensor Policy::project_query(Tape& tape, Tensor q_raw) {
    return tape.linear(tape.leaf(w_query_proj_), tape.leaf(b_query_proj_), q_raw);
}

Policy::HierResult Policy::hierarchical_attend(Tape& tape, Tensor q_t, const SubGraphs& subgraphs,
                                               bool training, Rng* rng) {
    HierResult result;
    result.v_t = q_t;
    Tensor q_lin = tape.add(tape.matvec(tape.leaf(w_q_), q_t), tape.leaf(b_q_));
    for (int i = 0; i < SubGraphs::count; ++i) {
        const KnowledgeGraph& view = subgraphs.view(i);
        result.nodes.push_back(view.entities());
        if (view.entities().empty()) {
            result.alpha.push_back(Tensor{});
            continue;
        }
        Tensor feats = node_features(tape, view.entities());
        auto edges = graph_edges(view, view.entities());
        double rate = training ? graph_dropout : 0.0;
        auto gat = gat_forward(tape, feats, edges, sub_gat_[static_cast<std::size_t>(i)], rate,
                               rng);  // [n, d_sub]
        Tensor emb_t = tape.transpose(gat.node_embeddings);  // [d_sub, n]
        Tensor h = tape.tanh(tape.add_broadcast(tape.matmul(tape.leaf(w_gp_), emb_t), q_lin));
        Tensor scores = tape.add_broadcast(tape.matmul(tape.leaf(w_h_), h), tape.leaf(b_h_));
        Tensor alpha = tape.softmax_rows(scores);  // [m, n], per-head over nodes
        result.alpha.push_back(alpha);
        Tensor weighted = tape.matmul(alpha, gat.node_embeddings);  // [m, d_sub]
        Tensor u = tape.scale(tape.sum_cols(weighted), 1.0 / static_cast<double>(dims_.heads));
        result.v_t = tape.add(result.v_t, u);
    }
    return result;
}

Policy::DecodeContext Policy::begin_decode(Tape& tape, Tensor v_t, const KnowledgeGraph& graph,
                                           bool training, Rng* mask_rng) {
    DecodeContext ctx;
    Tensor h0 = tape.zeros({dims_.d_text});
    auto gru = template_gru_.bind(tape);
    ctx.h_template = tape.gru_step(gru, v_t, h0);
    Tensor logits =
        tape.linear(tape.leaf(w_template_), tape.leaf(b_template_), ctx.h_template);
    ctx.template_logdist = tape.log(tape.softmax(logits));

    std::vector<double> mask(object_vocab_.size(), -1e9);
    std::size_t allowed = 0;
    for (const auto& e : graph.entities()) {
        auto it = object_index_.find(e);
        if (it != object_index_.end()) {
            mask[it->second] = 0.0;
            ++allowed;
        }
    }
    for (const auto& d : direction_words()) {
        auto it = object_index_.find(d);
        if (it != object_index_.end()) {
            mask[it->second] = 0.0;
            ++allowed;
        }
    }
    if (allowed == 0) {
        ctx.mask.reset();
        ctx.mask_fallback = true;
        if (mask_fallback_count++ == 0)
            std::fprintf(stderr, "warning: empty object mask, decoding unmasked\n");
    } else {
        if (training && mask_rng != nullptr && mask_dropout > 0.0) {
            for (auto& m : mask)
                if (m < 0.0 && mask_rng->bernoulli(mask_dropout)) m = 0.0;
        }
        ctx.mask = tape.constant({mask.size()}, mask);
    }
    return ctx;
}

namespace {

std::pair<Tensor, Tensor> decode_slot(Tape& tape, const Tape::GruParams& gru, Tensor input,
                                      Tensor h_prev, Tensor w_head, Tensor b_head,
                                      const std::optional<Tensor>& mask) {
    Tensor h = tape.gru_step(gru, input, h_prev);
    Tensor logits = tape.linear(w_head, b_head, h);
    if (mask.has_value()) logits = tape.add(logits, *mask);
    return {h, tape.log(tape.softmax(logits))};
}

}  // namespace

Tensor Policy::action_logprob(Tape& tape, DecodeContext& ctx, const ActionInstance& action) {
    const auto& templates = spec_->grammar.templates();
    int t_idx = static_cast<int>(action.tmpl - templates.data());
    if (t_idx < 0 || t_idx >= static_cast<int>(templates.size()))
        throw std::runtime_error("action template is not from this grammar");

    Tensor lp = tape.pick(ctx.template_logdist, static_cast<std::size_t>(t_idx));
    if (action.fillers.empty()) return lp;

    auto gru = object_gru_.bind(tape);
    Tensor w_head = tape.leaf(w_object_);
    Tensor b_head = tape.leaf(b_object_);

    auto it0 = ctx.slot0.find(t_idx);
    if (it0 == ctx.slot0.end()) {
        Tensor input = tape.row(
            tape.embed(tape.leaf(template_embedding_), {static_cast<std::size_t>(t_idx)}), 0);
        it0 = ctx.slot0
                  .emplace(t_idx, decode_slot(tape, gru, input, ctx.h_template, w_head, b_head,
                                              ctx.mask))
                  .first;
    }
    std::size_t w0 = object_index_.at(action.fillers[0]);
    lp = tape.add(lp, tape.pick(it0->second.second, w0));
    if (action.fillers.size() == 1) return lp;

    auto key = std::make_pair(t_idx, w0);
    auto it1 = ctx.slot1.find(key);
    if (it1 == ctx.slot1.end()) {
        Tensor input =
            tape.row(tape.embed(tape.leaf(embedding_), {tokens_.id(object_vocab_[w0])}), 0);
        it1 = ctx.slot1
                  .emplace(key, decode_slot(tape, gru, input, it0->second.first, w_head, b_head,
                                            ctx.mask))
                  .first;
    }
    std::size_t w1 = object_index_.at(action.fillers[1]);
    return tape.add(lp, tape.pick(it1->second.second, w1));
}

Policy::SampledAction Policy::sample_action(Tape& tape, DecodeContext& ctx, Rng& rng) {
    SampledAction out;
    const auto& templates = spec_->grammar.templates();

    const auto& t_logdist = tape.value(ctx.template_logdist);
    std::vector<double> t_probs(t_logdist.size());
    for (std::size_t i = 0; i < t_probs.size(); ++i) t_probs[i] = std::exp(t_logdist[i]);
    std::size_t t_idx = rng.categorical(t_probs);
    out.template_index = static_cast<int>(t_idx);
    out.template_logprob = tape.pick(ctx.template_logdist, t_idx);

    const ActionTemplate& tmpl = templates[t_idx];
    std::vector<std::string> fillers;

    auto gru = object_gru_.bind(tape);
    Tensor w_head = tape.leaf(w_object_);
    Tensor b_head = tape.leaf(b_object_);

    auto it0 = ctx.slot0.find(static_cast<int>(t_idx));
    if (tmpl.blanks >= 1) {
        if (it0 == ctx.slot0.end()) {
            Tensor input = tape.row(tape.embed(tape.leaf(template_embedding_), {t_idx}), 0);
            it0 = ctx.slot0
                      .emplace(static_cast<int>(t_idx),
                               decode_slot(tape, gru, input, ctx.h_template, w_head, b_head,
                                           ctx.mask))
                      .first;
        }
        const auto& logdist = tape.value(it0->second.second);
        std::vector<double> probs(logdist.size());
        for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(logdist[i]);
        std::size_t w0 = rng.categorical(probs);
        out.filler_ids.push_back(w0);
        out.object_dists.push_back(probs);
        out.object_logprobs.push_back(tape.pick(it0->second.second, w0));
        fillers.push_back(object_vocab_[w0]);

        if (tmpl.blanks == 2) {
            auto key = std::make_pair(static_cast<int>(t_idx), w0);
            auto it1 = ctx.slot1.find(key);
            if (it1 == ctx.slot1.end()) {
                Tensor input = tape.row(
                    tape.embed(tape.leaf(embedding_), {tokens_.id(object_vocab_[w0])}), 0);
                it1 = ctx.slot1
                          .emplace(key, decode_slot(tape, gru, input, it0->second.first, w_head,
                                                    b_head, ctx.mask))
                          .first;
            }
            const auto& logdist1 = tape.value(it1->second.second);
            std::vector<double> probs1(logdist1.size());
            for (std::size_t i = 0; i < probs1.size(); ++i) probs1[i] = std::exp(logdist1[i]);
            std::size_t w1 = rng.categorical(probs1);
            out.filler_ids.push_back(w1);
            out.object_dists.push_back(probs1);
            out.object_logprobs.push_back(tape.pick(it1->second.second, w1));
            fillers.push_back(object_vocab_[w1]);
        }
    }
    out.action = spec_->grammar.fill(tmpl, fillers);
    return out;
}

Tensor Policy::valid_action_entropy(Tape& tape, DecodeContext& ctx,
                                    const std::vector<ActionInstance>& valid) {
    if (valid.empty()) return tape.scalar(0.0);
    std::vector<Tensor> lps;
    lps.reserve(valid.size());
    for (const auto& a : valid) lps.push_back(action_logprob(tape, ctx, a));
    Tensor lpvec = tape.concat(lps);
    Tensor q = tape.softmax(lpvec);
    return tape.scale(tape.sum(tape.mul(q, tape.log(q))), -1.0);
}

Tensor Policy::critic_value(Tape& tape, Tensor v_t) {
    Tensor v = tape.linear(tape.leaf(w_critic_), tape.leaf(b_critic_), v_t);
    return v;  // shape [1]
}

Policy::ActResult Policy::act(Tape& tape, const Observation& obs, const KnowledgeGraph& graph,
                              const SubGraphs& subgraphs, const EncoderCarry& carry,
                              const std::vector<ActionInstance>& valid, Rng& sample_rng,
                              bool training, Rng* dropout_rng) {
    ActResult result;

    auto [o_t, carry2] = encode_observation(tape, obs, carry);
    result.carry = carry2;
    Tensor g_t = encode_full_graph(tape, graph, training, dropout_rng);
    FuseResult fuse = fuse_text_graph(tape, o_t, g_t);
    Tensor q_t = project_query(tape, fuse.q_raw);
    HierResult hier = hierarchical_attend(tape, q_t, subgraphs, training, dropout_rng);
    result.v_t = hier.v_t;

    result.decode = begin_decode(tape, hier.v_t, graph, training, dropout_rng);
    SampledAction sampled = sample_action(tape, result.decode, sample_rng);
    Tensor value = critic_value(tape, hier.v_t);
    Tensor entropy = valid_action_entropy(tape, result.decode, valid);

    result.tensors.template_logprob = sampled.template_logprob;
    result.tensors.object_logprobs = sampled.object_logprobs;
    result.tensors.value = value;
    result.tensors.entropy = entropy;

    // Detach everything the trace needs.
    ForwardTrace& trace = result.trace;
    std::size_t c = dims_.components;
    auto to_matrix = [&](Tensor t) {
        const auto& shape = tape.shape(t);
        const auto& vals = tape.value(t);
        Matrix m(shape[0], std::vector<double>(shape[1]));
        for (std::size_t i = 0; i < shape[0]; ++i)
            for (std::size_t j = 0; j < shape[1]; ++j) m[i][j] = vals[i * shape[1] + j];
        return m;
    };
    trace.o_t = to_matrix(o_t);
    trace.g_t = tape.value(g_t);
    trace.h_lstm = to_matrix(fuse.h_lstm);
    trace.alpha_lstm = to_matrix(fuse.alpha_lstm);
    trace.q_t = tape.value(q_t);
    for (int i = 0; i < SubGraphs::count; ++i) {
        auto& sub = trace.sub[static_cast<std::size_t>(i)];
        sub.nodes = hier.nodes[static_cast<std::size_t>(i)];
        if (!hier.alpha[static_cast<std::size_t>(i)].valid()) continue;
        Matrix head_by_node = to_matrix(hier.alpha[static_cast<std::size_t>(i)]);  // [m, n]
        std::size_t n = sub.nodes.size();
        sub.alpha.assign(n, std::vector<double>(dims_.heads, 0.0));
        for (std::size_t h = 0; h < dims_.heads; ++h)
            for (std::size_t v = 0; v < n; ++v) sub.alpha[v][h] = head_by_node[h][v];
        sub.alpha_channel_sum.assign(n, 0.0);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t h = 0; h < dims_.heads; ++h)
                sub.alpha_channel_sum[v] += sub.alpha[v][h];
    }
    trace.v_t = tape.value(hier.v_t);
    const auto& t_logdist = tape.value(result.decode.template_logdist);
    trace.template_dist.resize(t_logdist.size());
    for (std::size_t i = 0; i < t_logdist.size(); ++i)
        trace.template_dist[i] = std::exp(t_logdist[i]);
    trace.object_dists = sampled.object_dists;
    trace.critic_value = tape.scalar_value(value);
    trace.sampled = sampled.action;
    (void)c;
    return result;
}

// ---------------------------------------------------------------------------

std::vector<ExplanationItem> immediate_explanation(const ForwardTrace& trace,
                                                   const SubGraphs& subgraphs, int k,
                                                   int current_step, int recency_window,
                                                   const std::set<std::string>& observed_entities,
                                                   const PluralFn& is_plural) {
    struct Cand {
        std::string entity;
        int sub = 0;
        double saliency = 0.0;
    };
    std::map<std::string, Cand> best;
    for (int i = 0; i < SubGraphs::count; ++i) {
        const auto& sub = trace.sub[static_cast<std::size_t>(i)];
        for (std::size_t v = 0; v < sub.nodes.size(); ++v) {
            double s = std::abs(sub.alpha_channel_sum.empty() ? 0.0 : sub.alpha_channel_sum[v]);
            auto it = best.find(sub.nodes[v]);
            if (it == best.end() || s > it->second.saliency ||
                (s == it->second.saliency && i < it->second.sub)) {
                best[sub.nodes[v]] = Cand{sub.nodes[v], i, s};
            }
        }
    }

    auto is_valid = [&](const std::string& entity) {
        if (observed_entities.count(entity)) return true;
        for (int i = 0; i < SubGraphs::count; ++i) {
            for (const auto& t : subgraphs.view(i).incident(entity)) {
                int added = subgraphs.view(i).step_added(t);
                if (added >= 0 && added >= current_step - recency_window) return true;
            }
        }
        return false;
    };

    std::vector<Cand> ranked;
    for (const auto& [e, c] : best)
        if (is_valid(e)) ranked.push_back(c);
    std::sort(ranked.begin(), ranked.end(), [](const Cand& a, const Cand& b) {
        if (a.saliency != b.saliency) return a.saliency > b.saliency;
        if (a.sub != b.sub) return a.sub < b.sub;
        return a.entity < b.entity;
    });
    if (k >= 0 && ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));

    std::vector<ExplanationItem> out;
    for (const auto& cand : ranked) {
        const auto& view = subgraphs.view(cand.sub);
        const auto& sub_trace = trace.sub[static_cast<std::size_t>(cand.sub)];
        auto saliency_of = [&](const std::string& node) {
            for (std::size_t v = 0; v < sub_trace.nodes.size(); ++v)
                if (sub_trace.nodes[v] == node)
                    return std::abs(sub_trace.alpha_channel_sum[v]);
            return 0.0;
        };
        const Triple* chosen = nullptr;
        double best_neighbor = -1.0;
        auto incident = view.incident(cand.entity);
        std::sort(incident.begin(), incident.end());
        for (const auto& t : incident) {
            const std::string& other = t.subject == cand.entity ? t.object : t.subject;
            double s = saliency_of(other);
            if (s > best_neighbor) {
                best_neighbor = s;
                chosen = &t;
            }
        }
        if (chosen == nullptr) continue;
        ExplanationItem item;
        item.triple = *chosen;
        item.saliency = cand.saliency;
        item.entity = cand.entity;
        item.subgraph = cand.sub;
        item.text = triple_to_text(*chosen, is_plural);
        out.push_back(item);
    }
    return out;
}

}  // namespace hexplain
