#include "hexplain/trajstore.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hexplain/errors.hpp"
#include "hexplain/text_util.hpp"

namespace hexplain {

const char* terminal_cause_name(TerminalCause c) {
    switch (c) {
        case TerminalCause::Goal: return "goal";
        case TerminalCause::Death: return "death";
        case TerminalCause::Truncation: return "truncation";
    }
    return "?";
}

TerminalCause terminal_cause_from(const std::string& name) {
    if (name == "goal") return TerminalCause::Goal;
    if (name == "death") return TerminalCause::Death;
    if (name == "truncation") return TerminalCause::Truncation;
    throw std::invalid_argument("unknown terminal cause: " + name);
}

// ---------------------------------------------------------------------------
// Rollout collection

std::vector<Trajectory> collect_rollouts(Policy& policy, const GameSpec& spec, std::size_t n,
                                         std::uint64_t seed, const RolloutOptions& options) {
    std::vector<Trajectory> out;
    out.reserve(n);
    RuleExtractor extractor(spec);
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 17);

    for (std::size_t ep = 0; ep < n; ++ep) {
        Trajectory traj;
        traj.game_id = spec.game_id;
        traj.seed = seed;
        traj.checkpoint_id = options.checkpoint_id;

        auto [state, obs] = reset(spec, seed);
        KnowledgeGraph kg = update_graph(KnowledgeGraph{}, extractor.extract(obs, state.room), 0);
        std::vector<std::vector<double>> carry_detached(
            policy.dims().components, std::vector<double>(policy.dims().d_text, 0.0));

        for (std::size_t t = 0; t < options.max_episode_steps && !state.done; ++t) {
            Tape tape;
            EncoderCarry carry;
            carry.detached = carry_detached;
            carry = policy.rebind_carry(tape, carry);
            SubGraphs subs = partition(kg);
            auto act = policy.act(tape, obs, kg, subs, carry, {}, rng, false, nullptr);
            carry_detached = act.carry.detached;

            std::set<std::string> observed;
            for (const auto& tr : extractor.extract(obs, state.room)) {
                observed.insert(tr.subject);
                observed.insert(tr.object);
            }
            auto explanation = immediate_explanation(
                act.trace, subs, options.explanation_k, static_cast<int>(t),
                options.recency_window, observed,
                [&spec](const std::string& w) { return spec.is_plural(w); });

            StepRecord rec;
            rec.step = static_cast<int>(t);
            rec.desc = obs.desc;
            rec.feedback = obs.feedback;
            rec.inventory_text = obs.inventory_text;
            rec.prev_action = obs.prev_action;
            rec.kg_triples.assign(kg.triples().begin(), kg.triples().end());
            rec.action = act.trace.sampled.canonical_text;
            for (const auto& item : explanation) rec.immediate_explanation.push_back(item.text);
            rec.critic_value = act.trace.critic_value;
            rec.location = state.room;

            StepResult sr = step(spec, state, rec.action);
            state = sr.state;
            obs = sr.obs;
            kg = update_graph(kg, extractor.extract(obs, state.room), state.step_index);
            rec.reward = sr.obs.reward;
            rec.game_score = sr.obs.total_score;
            traj.steps.push_back(std::move(rec));
        }
        traj.final_score = state.score;
        if (state.death) traj.terminal = TerminalCause::Death;
        else if (state.done) traj.terminal = TerminalCause::Goal;
        else traj.terminal = TerminalCause::Truncation;
        out.push_back(std::move(traj));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kHeader = "#hexplain-traj v1";

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '^': out += "\\c"; break;
            case '|': out += "\\p"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape(const std::string& s, long line_no) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out.push_back(s[i]);
            continue;
        }
        if (i + 1 >= s.size()) throw SchemaError("dangling escape", line_no);
        switch (s[++i]) {
            case '\\': out.push_back('\\'); break;
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case 'c': out.push_back('^'); break;
            case 'p': out.push_back('|'); break;
            default: throw SchemaError("unknown escape", line_no);
        }
    }
    return out;
}

std::string format_double(double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", d);
    return buf;
}

double parse_double(const std::string& s, long line_no) {
    char* end = nullptr;
    double d = std::strtod(s.c_str(), &end);
    if (end == nullptr || *end != '\0') throw SchemaError("bad float '" + s + "'", line_no);
    return d;
}

long parse_long(const std::string& s, long line_no) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError("bad integer '" + s + "'", line_no);
    }
}

using Fields = std::vector<std::pair<std::string, std::string>>;

Fields parse_fields(const std::string& line, long line_no) {
    Fields out;
    std::size_t start = 2;  // skip the "T\t"/"S\t" tag
    while (start <= line.size()) {
        std::size_t end = line.find('\t', start);
        if (end == std::string::npos) end = line.size();
        std::string field = line.substr(start, end - start);
        auto eq = field.find('=');
        if (eq == std::string::npos) throw SchemaError("field without '='", line_no);
        out.emplace_back(field.substr(0, eq), field.substr(eq + 1));
        start = end + 1;
    }
    return out;
}

std::string get_field(const Fields& fields, const std::string& key, long line_no) {
    for (const auto& [k, v] : fields)
        if (k == key) return v;
    throw SchemaError("missing field '" + key + "'", line_no);
}

}  // namespace

void serialize(std::ostream& out, const std::vector<Trajectory>& trajectories) {
    out << kHeader << "\n";
    for (const auto& traj : trajectories) {
        out << "T\tgame=" << escape(traj.game_id) << "\tseed=" << traj.seed
            << "\tcheckpoint=" << escape(traj.checkpoint_id) << "\tfinal_score=" << traj.final_score
            << "\tterminal=" << terminal_cause_name(traj.terminal)
            << "\tsteps=" << traj.steps.size() << "\n";
        for (const auto& rec : traj.steps) {
            std::vector<std::string> kg_parts;
            for (const auto& t : rec.kg_triples) {
                kg_parts.push_back(escape(t.subject) + "|" + escape(t.relation) + "|" +
                                   escape(t.object) + "|" + category_name(t.category));
            }
            std::vector<std::string> expl_parts;
            for (const auto& e : rec.immediate_explanation) expl_parts.push_back(escape(e));
            out << "S\tstep=" << rec.step << "\tloc=" << escape(rec.location)
                << "\tdesc=" << escape(rec.desc) << "\tfeedback=" << escape(rec.feedback)
                << "\tinv=" << escape(rec.inventory_text)
                << "\tprev=" << escape(rec.prev_action) << "\taction=" << escape(rec.action)
                << "\tscore=" << rec.game_score << "\treward=" << rec.reward
                << "\tvalue=" << format_double(rec.critic_value) << "\tkg=" << join(kg_parts, "^")
                << "\texpl=" << join(expl_parts, "^") << "\n";
        }
    }
}

std::vector<Trajectory> deserialize(std::istream& in) {
    std::vector<Trajectory> out;
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw SchemaError("empty stream", 1);
    ++line_no;
    if (line != kHeader) throw SchemaError("bad header line", line_no);

    Trajectory* cur = nullptr;
    long expected_steps = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (starts_with(line, "T\t")) {
            if (cur != nullptr && static_cast<long>(cur->steps.size()) != expected_steps)
                throw SchemaError("trajectory step count mismatch", line_no);
            Fields f = parse_fields(line, line_no);
            Trajectory traj;
            traj.game_id = unescape(get_field(f, "game", line_no), line_no);
            traj.seed = static_cast<std::uint64_t>(
                std::stoull(get_field(f, "seed", line_no)));
            traj.checkpoint_id = unescape(get_field(f, "checkpoint", line_no), line_no);
            traj.final_score = static_cast<int>(parse_long(get_field(f, "final_score", line_no), line_no));
            traj.terminal = terminal_cause_from(get_field(f, "terminal", line_no));
            expected_steps = parse_long(get_field(f, "steps", line_no), line_no);
            out.push_back(std::move(traj));
            cur = &out.back();
        } else if (starts_with(line, "S\t")) {
            if (cur == nullptr) throw SchemaError("step before trajectory header", line_no);
            Fields f = parse_fields(line, line_no);
            StepRecord rec;
            rec.step = static_cast<int>(parse_long(get_field(f, "step", line_no), line_no));
            rec.location = unescape(get_field(f, "loc", line_no), line_no);
            rec.desc = unescape(get_field(f, "desc", line_no), line_no);
            rec.feedback = unescape(get_field(f, "feedback", line_no), line_no);
            rec.inventory_text = unescape(get_field(f, "inv", line_no), line_no);
            rec.prev_action = unescape(get_field(f, "prev", line_no), line_no);
            rec.action = unescape(get_field(f, "action", line_no), line_no);
            rec.game_score = static_cast<int>(parse_long(get_field(f, "score", line_no), line_no));
            rec.reward = static_cast<int>(parse_long(get_field(f, "reward", line_no), line_no));
            rec.critic_value = parse_double(get_field(f, "value", line_no), line_no);
            std::string kg = get_field(f, "kg", line_no);
            if (!kg.empty()) {
                std::istringstream kgs(kg);
                std::string part;
                while (std::getline(kgs, part, '^')) {
                    std::vector<std::string> bits;
                    std::istringstream ps(part);
                    std::string bit;
                    while (std::getline(ps, bit, '|')) bits.push_back(bit);
                    if (bits.size() != 4) throw SchemaError("triple needs 4 parts", line_no);
                    Triple t(unescape(bits[0], line_no), unescape(bits[1], line_no),
                             unescape(bits[2], line_no));
                    if (std::string(category_name(t.category)) != bits[3])
                        throw SchemaError("triple category mismatch", line_no);
                    rec.kg_triples.push_back(t);
                }
            }
            std::string expl = get_field(f, "expl", line_no);
            if (!expl.empty()) {
                std::istringstream es(expl);
                std::string part;
                while (std::getline(es, part, '^'))
                    rec.immediate_explanation.push_back(unescape(part, line_no));
            }
            cur->steps.push_back(std::move(rec));
        } else {
            throw SchemaError("unknown record tag", line_no);
        }
    }
    if (cur != nullptr && static_cast<long>(cur->steps.size()) != expected_steps)
        throw SchemaError("trajectory step count mismatch at end of stream", line_no);
    return out;
}

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    serialize(out, trajectories);
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return deserialize(in);
}

void validate_corpus(const std::vector<Trajectory>& trajectories, const GameSpec& spec) {
    auto plural = [&spec](const std::string& w) { return spec.is_plural(w); };
    for (const auto& traj : trajectories) {
        if (!traj.steps.empty() && traj.final_score != traj.steps.back().game_score)
            throw std::runtime_error("final_score does not match the last step");
        for (std::size_t i = 0; i < traj.steps.size(); ++i) {
            const StepRecord& rec = traj.steps[i];
            if (rec.step != static_cast<int>(i))
                throw std::runtime_error("non-consecutive step indices");
            if (!spec.grammar.parse_action(rec.action).has_value())
                throw std::runtime_error("unparseable action in log: " + rec.action);
            std::set<std::string> renderings;
            for (const auto& t : rec.kg_triples) renderings.insert(triple_to_text(t, plural));
            for (const auto& e : rec.immediate_explanation) {
                if (!renderings.count(e))
                    throw std::runtime_error("explanation not derived from the logged graph: " + e);
            }
        }
    }
}

}  // namespace hexplain
