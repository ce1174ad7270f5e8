#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hexplain/rng.hpp"

namespace hexplain {

// Named, trainable weight block. Lives outside any tape; forward passes bind
// it as a leaf and backward() accumulates into grad.
struct Parameter {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::string name, std::vector<std::size_t> shape);

    std::size_t size() const { return value.size(); }
    void zero_grad();
    void fill_normal(Rng& rng, double stddev);
};

// Handle into a Tape's node table. Valid only for the tape that produced it.
struct Tensor {
    int node = -1;
    bool valid() const { return node >= 0; }
};

// Reverse-mode tape. Built fresh for every forward pass (or rollout
// fragment) and discarded after backward(); no reuse across passes.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // -- leaves ------------------------------------------------------------
    Tensor leaf(Parameter& p);
    Tensor constant(std::vector<std::size_t> shape, std::vector<double> values);
    Tensor scalar(double v);
    Tensor zeros(std::vector<std::size_t> shape);

    // -- shape access ------------------------------------------------------
    const std::vector<std::size_t>& shape(Tensor t) const;
    const std::vector<double>& value(Tensor t) const;
    const std::vector<double>& grad(Tensor t) const;
    double scalar_value(Tensor t) const;

    // -- ops ---------------------------------------------------------------
    Tensor add(Tensor a, Tensor b);
    Tensor sub(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);  // elementwise
    Tensor scale(Tensor a, double c);
    Tensor add_scalar(Tensor a, double c);
    Tensor matmul(Tensor a, Tensor b);         // [m,k] x [k,n] -> [m,n]
    Tensor matvec(Tensor m, Tensor v);         // [m,n] x [n] -> [m]
    Tensor linear(Tensor w, Tensor b, Tensor x);  // w x + b
    Tensor add_broadcast(Tensor m, Tensor v);  // [r,c] plus column vector [r]
    Tensor tanh(Tensor a);
    Tensor sigmoid(Tensor a);
    Tensor elu(Tensor a);
    Tensor leaky_relu(Tensor a, double slope);
    Tensor log(Tensor a);
    Tensor softmax(Tensor a);              // vector
    Tensor softmax_rows(Tensor a);         // [r,c], normalized across each row
    Tensor softmax_cols(Tensor a);         // [r,c], normalized down each column
    Tensor concat(const std::vector<Tensor>& parts);        // vectors -> vector
    Tensor stack_columns(const std::vector<Tensor>& cols);  // n vectors [r] -> [r,n]
    Tensor transpose(Tensor m);
    Tensor mul_by_scalar(Tensor a, Tensor s);  // any shape times scalar tensor
    Tensor column(Tensor m, std::size_t j);
    Tensor row(Tensor m, std::size_t i);
    Tensor sum(Tensor a);                 // all elements -> scalar
    Tensor sum_rows(Tensor m);            // [r,c] -> [r], sum across columns
    Tensor sum_cols(Tensor m);            // [r,c] -> [c], sum down rows
    Tensor mean(Tensor a);
    Tensor pick(Tensor v, std::size_t index);  // vector element -> scalar
    Tensor embed(Tensor table, const std::vector<std::size_t>& ids);  // [V,d] -> [len,d]
    Tensor dropout(Tensor a, double rate, Rng& rng);  // inverted dropout
    Tensor square(Tensor a);

    struct GruParams;
    Tensor gru_step(const GruParams& p, Tensor x, Tensor h_prev);

    // Seeds d(loss)/d(loss)=1 and propagates to all leaves; parameter
    // gradients accumulate into their Parameter::grad buffers.
    void backward(Tensor loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<std::size_t> shape;
        std::vector<double> value;
        std::vector<double> grad;
        std::function<void()> backprop;  // empty for leaves
        Parameter* param = nullptr;      // set for parameter leaves
    };

    Tensor make_node(std::vector<std::size_t> shape, std::vector<double> value);
    Node& at(Tensor t);
    const Node& at(Tensor t) const;
    static std::size_t numel(const std::vector<std::size_t>& shape);

    std::vector<std::unique_ptr<Node>> nodes_;
};

// The nine weight blocks of one gated recurrent unit cell.
struct Tape::GruParams {
    Tensor w_r, u_r, b_r;
    Tensor w_z, u_z, b_z;
    Tensor w_n, u_n, b_n;
};

struct GruParameters {
    Parameter w_r, u_r, b_r, w_z, u_z, b_z, w_n, u_n, b_n;

    GruParameters() = default;
    GruParameters(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);
    Tape::GruParams bind(Tape& tape);
    void collect(std::vector<Parameter*>& out);
};

// -- graph attention ---------------------------------------------------------

struct GatLayerParams {
    std::vector<Parameter> head_weight;   // per head: [head_dim, input_dim]
    std::vector<Parameter> head_attn_src; // per head: [head_dim]
    std::vector<Parameter> head_attn_dst; // per head: [head_dim]
    double leaky_slope = 0.2;

    GatLayerParams() = default;
    GatLayerParams(const std::string& prefix, std::size_t input_dim, std::size_t head_dim,
                   std::size_t heads);
    std::size_t heads() const { return head_weight.size(); }
    void collect(std::vector<Parameter*>& out);
};

struct GatForwardResult {
    Tensor node_embeddings;                        // [n, head_dim], head-averaged
    Tensor head_attention;                         // [n, m] mean received attention
    std::vector<std::vector<double>> attention_rows;  // copy of head_attention values
};

// One attention layer over a directed edge list; self-loops are implicit and
// attention normalizes over each node's in-neighborhood. When training, a
// dropout rate > 0 removes non-self edges at random.
GatForwardResult gat_forward(Tape& tape, Tensor node_features,
                             const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                             GatLayerParams& params, double edge_dropout = 0.0,
                             Rng* rng = nullptr);

// -- gradient checking --------------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 1e-4;
    bool passed = false;
    std::string summary() const;
};

// Compares reverse-mode gradients against central finite differences
// (h = 1e-5) for every parameter the function touches. f builds a scalar
// loss on the tape it is handed.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f,
                           std::vector<Parameter*> params, double tolerance);

}  // namespace hexplain
