#include "hexplain/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hexplain/errors.hpp"

namespace hexplain {

namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace

Parameter::Parameter(std::string name_, std::vector<std::size_t> shape_)
    : name(std::move(name_)), shape(std::move(shape_)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    value.assign(n, 0.0);
    grad.assign(n, 0.0);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Parameter::fill_normal(Rng& rng, double stddev) {
    for (auto& v : value) v = rng.normal(0.0, stddev);
}

std::size_t Tape::numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor Tape::make_node(std::vector<std::size_t> shape, std::vector<double> value) {
    auto node = std::make_unique<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->grad.assign(node->value.size(), 0.0);
    nodes_.push_back(std::move(node));
    return Tensor{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::at(Tensor t) { return *nodes_.at(static_cast<std::size_t>(t.node)); }
const Tape::Node& Tape::at(Tensor t) const { return *nodes_.at(static_cast<std::size_t>(t.node)); }

Tensor Tape::leaf(Parameter& p) {
    Tensor t = make_node(p.shape, p.value);
    at(t).param = &p;
    return t;
}

Tensor Tape::constant(std::vector<std::size_t> shape, std::vector<double> values) {
    if (numel(shape) != values.size())
        throw ShapeMismatch("constant " + shape_str(shape) + " given " +
                            std::to_string(values.size()) + " values");
    return make_node(std::move(shape), std::move(values));
}

Tensor Tape::scalar(double v) { return make_node({1}, {v}); }

Tensor Tape::zeros(std::vector<std::size_t> shape) {
    std::size_t n = numel(shape);
    return make_node(std::move(shape), std::vector<double>(n, 0.0));
}

const std::vector<std::size_t>& Tape::shape(Tensor t) const { return at(t).shape; }
const std::vector<double>& Tape::value(Tensor t) const { return at(t).value; }
const std::vector<double>& Tape::grad(Tensor t) const { return at(t).grad; }

double Tape::scalar_value(Tensor t) const {
    const Node& n = at(t);
    if (n.value.size() != 1) throw ShapeMismatch("scalar_value on " + shape_str(n.shape));
    return n.value[0];
}

Tensor Tape::add(Tensor a, Tensor b) {
    Node& na = at(a);
    Node& nb = at(b);
    if (na.shape != nb.shape)
        throw ShapeMismatch("add " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] + nb.value[i];
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pb = &nb;
    Node* pt = &at(t);
    pt->backprop = [pa, pb, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) {
            pa->grad[i] += pt->grad[i];
            pb->grad[i] += pt->grad[i];
        }
    };
    return t;
}

Tensor Tape::sub(Tensor a, Tensor b) {
    Node& na = at(a);
    Node& nb = at(b);
    if (na.shape != nb.shape)
        throw ShapeMismatch("sub " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] - nb.value[i];
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pb = &nb;
    Node* pt = &at(t);
    pt->backprop = [pa, pb, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) {
            pa->grad[i] += pt->grad[i];
            pb->grad[i] -= pt->grad[i];
        }
    };
    return t;
}

Tensor Tape::mul(Tensor a, Tensor b) {
    Node& na = at(a);
    Node& nb = at(b);
    if (na.shape != nb.shape)
        throw ShapeMismatch("mul " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * nb.value[i];
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pb = &nb;
    Node* pt = &at(t);
    pt->backprop = [pa, pb, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) {
            pa->grad[i] += pt->grad[i] * pb->value[i];
            pb->grad[i] += pt->grad[i] * pa->value[i];
        }
    };
    return t;
}

Tensor Tape::scale(Tensor a, double c) {
    Node& na = at(a);
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * c;
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt, c] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) pa->grad[i] += pt->grad[i] * c;
    };
    return t;
}

Tensor Tape::add_scalar(Tensor a, double c) {
    Node& na = at(a);
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] + c;
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) pa->grad[i] += pt->grad[i];
    };
    return t;
}

Tensor Tape::mul_by_scalar(Tensor a, Tensor s) {
    Node& na = at(a);
    Node& ns = at(s);
    if (ns.value.size() != 1) throw ShapeMismatch("mul_by_scalar needs scalar second arg");
    std::vector<double> out(na.value.size());
    double sv = ns.value[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * sv;
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* ps = &ns;
    Node* pt = &at(t);
    pt->backprop = [pa, ps, pt] {
        double sv = ps->value[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < pt->grad.size(); ++i) {
            pa->grad[i] += pt->grad[i] * sv;
            acc += pt->grad[i] * pa->value[i];
        }
        ps->grad[0] += acc;
    };
    return t;
}

Tensor Tape::matmul(Tensor a, Tensor b) {
    Node& na = at(a);
    Node& nb = at(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
        throw ShapeMismatch("matmul " + shape_str(na.shape) + " x " + shape_str(nb.shape));
    std::size_t m = na.shape[0], k = na.shape[1], n = nb.shape[1];
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = na.value[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * nb.value[p * n + j];
        }
    Tensor t = make_node({m, n}, std::move(out));
    Node* pa = &na;
    Node* pb = &nb;
    Node* pt = &at(t);
    pt->backprop = [pa, pb, pt, m, k, n] {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double g = pt->grad[i * n + j];
                if (g == 0.0) continue;
                for (std::size_t p = 0; p < k; ++p) {
                    pa->grad[i * k + p] += g * pb->value[p * n + j];
                    pb->grad[p * n + j] += g * pa->value[i * k + p];
                }
            }
    };
    return t;
}

Tensor Tape::matvec(Tensor m, Tensor v) {
    Node& nm = at(m);
    Node& nv = at(v);
    if (nm.shape.size() != 2 || nv.shape.size() != 1 || nm.shape[1] != nv.shape[0])
        throw ShapeMismatch("matvec " + shape_str(nm.shape) + " x " + shape_str(nv.shape));
    std::size_t rows = nm.shape[0], cols = nm.shape[1];
    std::vector<double> out(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        const double* row = nm.value.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * nv.value[j];
        out[i] = acc;
    }
    Tensor t = make_node({rows}, std::move(out));
    Node* pm = &nm;
    Node* pv = &nv;
    Node* pt = &at(t);
    pt->backprop = [pm, pv, pt, rows, cols] {
        for (std::size_t i = 0; i < rows; ++i) {
            double g = pt->grad[i];
            if (g == 0.0) continue;
            double* mrow = pm->grad.data() + i * cols;
            const double* vrow = pm->value.data() + i * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                mrow[j] += g * pv->value[j];
                pv->grad[j] += g * vrow[j];
            }
        }
    };
    return t;
}

Tensor Tape::linear(Tensor w, Tensor b, Tensor x) { return add(matvec(w, x), b); }

Tensor Tape::add_broadcast(Tensor m, Tensor v) {
    Node& nm = at(m);
    Node& nv = at(v);
    if (nm.shape.size() != 2 || nv.shape.size() != 1 || nm.shape[0] != nv.shape[0])
        throw ShapeMismatch("add_broadcast " + shape_str(nm.shape) + " + " + shape_str(nv.shape));
    std::size_t rows = nm.shape[0], cols = nm.shape[1];
    std::vector<double> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = nm.value[i * cols + j] + nv.value[i];
    Tensor t = make_node(nm.shape, std::move(out));
    Node* pm = &nm;
    Node* pv = &nv;
    Node* pt = &at(t);
    pt->backprop = [pm, pv, pt, rows, cols] {
        for (std::size_t i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                double g = pt->grad[i * cols + j];
                pm->grad[i * cols + j] += g;
                acc += g;
            }
            pv->grad[i] += acc;
        }
    };
    return t;
}

Tensor Tape::tanh(Tensor a) {
    Node& na = at(a);
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(na.value[i]);
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i)
            pa->grad[i] += pt->grad[i] * (1.0 - pt->value[i] * pt->value[i]);
    };
    return t;
}

Tensor Tape::sigmoid(Tensor a) {
    Node& na = at(a);
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-na.value[i]));
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i)
            pa->grad[i] += pt->grad[i] * pt->value[i] * (1.0 - pt->value[i]);
    };
    return t;
}

Tensor Tape::elu(Tensor a) {
    Node& na = at(a);
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = na.value[i];
        out[i] = x >= 0.0 ? x : std::expm1(x);
    }
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) {
            double x = pa->value[i];
            pa->grad[i] += pt->grad[i] * (x >= 0.0 ? 1.0 : std::exp(x));
        }
    };
    return t;
}

Tensor Tape::leaky_relu(Tensor a, double slope) {
    Node& na = at(a);
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = na.value[i];
        out[i] = x >= 0.0 ? x : slope * x;
    }
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt, slope] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) {
            double x = pa->value[i];
            pa->grad[i] += pt->grad[i] * (x >= 0.0 ? 1.0 : slope);
        }
    };
    return t;
}

Tensor Tape::log(Tensor a) {
    Node& na = at(a);
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(na.value[i], 1e-300));
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i)
            pa->grad[i] += pt->grad[i] / std::max(pa->value[i], 1e-300);
    };
    return t;
}

Tensor Tape::square(Tensor a) { return mul(a, a); }

namespace {

void softmax_span(const double* in, double* out, std::size_t n, std::size_t stride) {
    double mx = -1e300;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, in[i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = std::exp(in[i * stride] - mx);
        out[i * stride] = e;
        total += e;
    }
    for (std::size_t i = 0; i < n; ++i) out[i * stride] /= total;
}

void softmax_span_backward(const double* s, const double* dy, double* dx, std::size_t n,
                           std::size_t stride) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += dy[i * stride] * s[i * stride];
    for (std::size_t i = 0; i < n; ++i) dx[i * stride] += s[i * stride] * (dy[i * stride] - dot);
}

}  // namespace

Tensor Tape::softmax(Tensor a) {
    Node& na = at(a);
    if (na.shape.size() != 1) throw ShapeMismatch("softmax expects a vector");
    std::vector<double> out(na.value.size());
    softmax_span(na.value.data(), out.data(), out.size(), 1);
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt] {
        softmax_span_backward(pt->value.data(), pt->grad.data(), pa->grad.data(),
                              pt->value.size(), 1);
    };
    return t;
}

Tensor Tape::softmax_rows(Tensor a) {
    Node& na = at(a);
    if (na.shape.size() != 2) throw ShapeMismatch("softmax_rows expects a matrix");
    std::size_t rows = na.shape[0], cols = na.shape[1];
    std::vector<double> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        softmax_span(na.value.data() + i * cols, out.data() + i * cols, cols, 1);
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt, rows, cols] {
        for (std::size_t i = 0; i < rows; ++i)
            softmax_span_backward(pt->value.data() + i * cols, pt->grad.data() + i * cols,
                                  pa->grad.data() + i * cols, cols, 1);
    };
    return t;
}

Tensor Tape::softmax_cols(Tensor a) {
    Node& na = at(a);
    if (na.shape.size() != 2) throw ShapeMismatch("softmax_cols expects a matrix");
    std::size_t rows = na.shape[0], cols = na.shape[1];
    std::vector<double> out(rows * cols);
    for (std::size_t j = 0; j < cols; ++j)
        softmax_span(na.value.data() + j, out.data() + j, rows, cols);
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt, rows, cols] {
        for (std::size_t j = 0; j < cols; ++j)
            softmax_span_backward(pt->value.data() + j, pt->grad.data() + j, pa->grad.data() + j,
                                  rows, cols);
    };
    return t;
}

Tensor Tape::concat(const std::vector<Tensor>& parts) {
    std::vector<double> out;
    std::vector<Node*> srcs;
    for (Tensor p : parts) {
        Node& np = at(p);
        if (np.shape.size() != 1) throw ShapeMismatch("concat expects vectors");
        out.insert(out.end(), np.value.begin(), np.value.end());
        srcs.push_back(&np);
    }
    Tensor t = make_node({out.size()}, std::move(out));
    Node* pt = &at(t);
    pt->backprop = [srcs, pt] {
        std::size_t off = 0;
        for (Node* src : srcs) {
            for (std::size_t i = 0; i < src->grad.size(); ++i) src->grad[i] += pt->grad[off + i];
            off += src->grad.size();
        }
    };
    return t;
}

Tensor Tape::stack_columns(const std::vector<Tensor>& cols) {
    if (cols.empty()) throw ShapeMismatch("stack_columns needs at least one column");
    std::size_t rows = at(cols[0]).shape[0];
    std::size_t n = cols.size();
    std::vector<double> out(rows * n);
    std::vector<Node*> srcs;
    for (std::size_t j = 0; j < n; ++j) {
        Node& nc = at(cols[j]);
        if (nc.shape.size() != 1 || nc.shape[0] != rows)
            throw ShapeMismatch("stack_columns column " + std::to_string(j));
        for (std::size_t i = 0; i < rows; ++i) out[i * n + j] = nc.value[i];
        srcs.push_back(&nc);
    }
    Tensor t = make_node({rows, n}, std::move(out));
    Node* pt = &at(t);
    pt->backprop = [srcs, pt, rows, n] {
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < rows; ++i) srcs[j]->grad[i] += pt->grad[i * n + j];
    };
    return t;
}

Tensor Tape::transpose(Tensor m) {
    Node& nm = at(m);
    if (nm.shape.size() != 2) throw ShapeMismatch("transpose expects a matrix");
    std::size_t rows = nm.shape[0], cols = nm.shape[1];
    std::vector<double> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = nm.value[i * cols + j];
    Tensor t = make_node({cols, rows}, std::move(out));
    Node* pm = &nm;
    Node* pt = &at(t);
    pt->backprop = [pm, pt, rows, cols] {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) pm->grad[i * cols + j] += pt->grad[j * rows + i];
    };
    return t;
}

Tensor Tape::column(Tensor m, std::size_t j) {
    Node& nm = at(m);
    if (nm.shape.size() != 2 || j >= nm.shape[1]) throw ShapeMismatch("column index out of range");
    std::size_t rows = nm.shape[0], cols = nm.shape[1];
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = nm.value[i * cols + j];
    Tensor t = make_node({rows}, std::move(out));
    Node* pm = &nm;
    Node* pt = &at(t);
    pt->backprop = [pm, pt, rows, cols, j] {
        for (std::size_t i = 0; i < rows; ++i) pm->grad[i * cols + j] += pt->grad[i];
    };
    return t;
}

Tensor Tape::row(Tensor m, std::size_t i) {
    Node& nm = at(m);
    if (nm.shape.size() != 2 || i >= nm.shape[0]) throw ShapeMismatch("row index out of range");
    std::size_t cols = nm.shape[1];
    std::vector<double> out(nm.value.begin() + static_cast<long>(i * cols),
                            nm.value.begin() + static_cast<long>((i + 1) * cols));
    Tensor t = make_node({cols}, std::move(out));
    Node* pm = &nm;
    Node* pt = &at(t);
    pt->backprop = [pm, pt, cols, i] {
        for (std::size_t j = 0; j < cols; ++j) pm->grad[i * cols + j] += pt->grad[j];
    };
    return t;
}

Tensor Tape::sum(Tensor a) {
    Node& na = at(a);
    double total = 0.0;
    for (double v : na.value) total += v;
    Tensor t = make_node({1}, {total});
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt] {
        for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += pt->grad[0];
    };
    return t;
}

Tensor Tape::sum_rows(Tensor m) {
    Node& nm = at(m);
    if (nm.shape.size() != 2) throw ShapeMismatch("sum_rows expects a matrix");
    std::size_t rows = nm.shape[0], cols = nm.shape[1];
    std::vector<double> out(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i] += nm.value[i * cols + j];
    Tensor t = make_node({rows}, std::move(out));
    Node* pm = &nm;
    Node* pt = &at(t);
    pt->backprop = [pm, pt, rows, cols] {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) pm->grad[i * cols + j] += pt->grad[i];
    };
    return t;
}

Tensor Tape::sum_cols(Tensor m) {
    Node& nm = at(m);
    if (nm.shape.size() != 2) throw ShapeMismatch("sum_cols expects a matrix");
    std::size_t rows = nm.shape[0], cols = nm.shape[1];
    std::vector<double> out(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j] += nm.value[i * cols + j];
    Tensor t = make_node({cols}, std::move(out));
    Node* pm = &nm;
    Node* pt = &at(t);
    pt->backprop = [pm, pt, rows, cols] {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) pm->grad[i * cols + j] += pt->grad[j];
    };
    return t;
}

Tensor Tape::mean(Tensor a) {
    Node& na = at(a);
    std::size_t n = na.value.size();
    return scale(sum(a), n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
}

Tensor Tape::pick(Tensor v, std::size_t index) {
    Node& nv = at(v);
    if (nv.shape.size() != 1 || index >= nv.shape[0]) throw ShapeMismatch("pick out of range");
    Tensor t = make_node({1}, {nv.value[index]});
    Node* pv = &nv;
    Node* pt = &at(t);
    pt->backprop = [pv, pt, index] { pv->grad[index] += pt->grad[0]; };
    return t;
}

Tensor Tape::embed(Tensor table, const std::vector<std::size_t>& ids) {
    Node& nt = at(table);
    if (nt.shape.size() != 2) throw ShapeMismatch("embed expects a [V,d] table");
    std::size_t v = nt.shape[0], d = nt.shape[1];
    std::vector<double> out(ids.size() * d);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] >= v) throw ShapeMismatch("embed id out of range");
        for (std::size_t j = 0; j < d; ++j) out[k * d + j] = nt.value[ids[k] * d + j];
    }
    Tensor t = make_node({ids.size(), d}, std::move(out));
    Node* ptab = &nt;
    Node* pt = &at(t);
    auto ids_copy = ids;
    pt->backprop = [ptab, pt, ids_copy, d] {
        for (std::size_t k = 0; k < ids_copy.size(); ++k)
            for (std::size_t j = 0; j < d; ++j)
                ptab->grad[ids_copy[k] * d + j] += pt->grad[k * d + j];
    };
    return t;
}

Tensor Tape::dropout(Tensor a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    Node& na = at(a);
    std::vector<double> mask(na.value.size());
    double keep = 1.0 - rate;
    for (auto& m : mask) m = rng.bernoulli(rate) ? 0.0 : 1.0 / keep;
    std::vector<double> out(na.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * mask[i];
    Tensor t = make_node(na.shape, std::move(out));
    Node* pa = &na;
    Node* pt = &at(t);
    pt->backprop = [pa, pt, mask] {
        for (std::size_t i = 0; i < pt->grad.size(); ++i) pa->grad[i] += pt->grad[i] * mask[i];
    };
    return t;
}

Tensor Tape::gru_step(const GruParams& p, Tensor x, Tensor h_prev) {
    Tensor r = sigmoid(add(add(matvec(p.w_r, x), matvec(p.u_r, h_prev)), p.b_r));
    Tensor z = sigmoid(add(add(matvec(p.w_z, x), matvec(p.u_z, h_prev)), p.b_z));
    Tensor n = tanh(add(add(matvec(p.w_n, x), matvec(p.u_n, mul(r, h_prev))), p.b_n));
    // h' = (1-z)*n + z*h
    return add(n, mul(z, sub(h_prev, n)));
}

void Tape::backward(Tensor loss) {
    Node& nl = at(loss);
    if (nl.value.size() != 1) throw ShapeMismatch("backward needs a scalar loss");
    for (auto& n : nodes_) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    nl.grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop();
    }
    for (auto& n : nodes_) {
        if (n->param != nullptr) {
            for (std::size_t i = 0; i < n->grad.size(); ++i) n->param->grad[i] += n->grad[i];
        }
    }
}

// ---------------------------------------------------------------------------

GruParameters::GruParameters(const std::string& prefix, std::size_t in_dim, std::size_t h_dim)
    : w_r(prefix + ".w_r", {h_dim, in_dim}), u_r(prefix + ".u_r", {h_dim, h_dim}),
      b_r(prefix + ".b_r", {h_dim}),
      w_z(prefix + ".w_z", {h_dim, in_dim}), u_z(prefix + ".u_z", {h_dim, h_dim}),
      b_z(prefix + ".b_z", {h_dim}),
      w_n(prefix + ".w_n", {h_dim, in_dim}), u_n(prefix + ".u_n", {h_dim, h_dim}),
      b_n(prefix + ".b_n", {h_dim}) {}

Tape::GruParams GruParameters::bind(Tape& tape) {
    return Tape::GruParams{tape.leaf(w_r), tape.leaf(u_r), tape.leaf(b_r),
                           tape.leaf(w_z), tape.leaf(u_z), tape.leaf(b_z),
                           tape.leaf(w_n), tape.leaf(u_n), tape.leaf(b_n)};
}

void GruParameters::collect(std::vector<Parameter*>& out) {
    for (Parameter* p : {&w_r, &u_r, &b_r, &w_z, &u_z, &b_z, &w_n, &u_n, &b_n}) out.push_back(p);
}

GatLayerParams::GatLayerParams(const std::string& prefix, std::size_t input_dim,
                               std::size_t head_dim, std::size_t heads) {
    for (std::size_t h = 0; h < heads; ++h) {
        head_weight.emplace_back(prefix + ".w" + std::to_string(h),
                                 std::vector<std::size_t>{head_dim, input_dim});
        head_attn_src.emplace_back(prefix + ".a_src" + std::to_string(h),
                                   std::vector<std::size_t>{head_dim});
        head_attn_dst.emplace_back(prefix + ".a_dst" + std::to_string(h),
                                   std::vector<std::size_t>{head_dim});
    }
}

void GatLayerParams::collect(std::vector<Parameter*>& out) {
    for (auto& p : head_weight) out.push_back(&p);
    for (auto& p : head_attn_src) out.push_back(&p);
    for (auto& p : head_attn_dst) out.push_back(&p);
}

GatForwardResult gat_forward(Tape& tape, Tensor node_features,
                             const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                             GatLayerParams& params, double edge_dropout, Rng* rng) {
    const auto& fshape = tape.shape(node_features);
    if (fshape.size() != 2) throw ShapeMismatch("gat_forward expects [n, d] features");
    std::size_t n = fshape[0];
    std::size_t m = params.heads();

    // in-neighborhoods with implicit self-loops
    std::vector<std::vector<std::size_t>> in_nbrs(n);
    for (std::size_t i = 0; i < n; ++i) in_nbrs[i].push_back(i);
    for (const auto& [src, dst] : edges) {
        if (src >= n || dst >= n) throw ShapeMismatch("gat edge references missing node");
        if (src == dst) continue;
        if (edge_dropout > 0.0 && rng != nullptr && rng->bernoulli(edge_dropout)) continue;
        in_nbrs[dst].push_back(src);
    }
    for (auto& nbrs : in_nbrs) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }

    std::vector<Tensor> head_outputs;                        // each [n, head_dim]
    std::vector<std::vector<std::vector<double>>> received(  // [head][node] masses
        m, std::vector<std::vector<double>>(n));

    for (std::size_t h = 0; h < m; ++h) {
        Tensor w = tape.leaf(params.head_weight[h]);
        Tensor a_src = tape.leaf(params.head_attn_src[h]);
        Tensor a_dst = tape.leaf(params.head_attn_dst[h]);
        Tensor z = tape.matmul(node_features, tape.transpose(w));  // [n, head_dim]
        Tensor s_src = tape.matvec(z, a_src);                      // [n]
        Tensor s_dst = tape.matvec(z, a_dst);                      // [n]

        std::vector<Tensor> rows;
        rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& nbrs = in_nbrs[i];
            std::vector<Tensor> scores;
            scores.reserve(nbrs.size());
            for (std::size_t j : nbrs)
                scores.push_back(tape.add(tape.pick(s_src, j), tape.pick(s_dst, i)));
            Tensor e = tape.leaky_relu(tape.concat(scores), params.leaky_slope);
            Tensor alpha = tape.softmax(e);
            const auto& alpha_v = tape.value(alpha);
            for (std::size_t k = 0; k < nbrs.size(); ++k)
                received[h][nbrs[k]].push_back(alpha_v[k]);

            Tensor acc = tape.mul_by_scalar(tape.row(z, nbrs[0]), tape.pick(alpha, 0));
            for (std::size_t k = 1; k < nbrs.size(); ++k)
                acc = tape.add(acc, tape.mul_by_scalar(tape.row(z, nbrs[k]), tape.pick(alpha, k)));
            rows.push_back(acc);
        }
        Tensor stacked = tape.transpose(tape.stack_columns(rows));  // [n, head_dim]
        head_outputs.push_back(stacked);
    }

    Tensor mean_heads = head_outputs[0];
    for (std::size_t h = 1; h < m; ++h) mean_heads = tape.add(mean_heads, head_outputs[h]);
    mean_heads = tape.scale(mean_heads, 1.0 / static_cast<double>(m));
    Tensor out = tape.elu(mean_heads);

    std::vector<double> head_attn(n * m, 0.0);
    std::vector<std::vector<double>> attn_rows(n, std::vector<double>(m, 0.0));
    for (std::size_t h = 0; h < m; ++h) {
        for (std::size_t v = 0; v < n; ++v) {
            const auto& masses = received[h][v];
            double mean_mass = 0.0;
            if (!masses.empty()) {
                for (double x : masses) mean_mass += x;
                mean_mass /= static_cast<double>(masses.size());
            }
            head_attn[v * m + h] = mean_mass;
            attn_rows[v][h] = mean_mass;
        }
    }
    GatForwardResult result;
    result.node_embeddings = out;
    result.head_attention = tape.constant({n, m}, std::move(head_attn));
    result.attention_rows = std::move(attn_rows);
    return result;
}

// ---------------------------------------------------------------------------

std::string GradCheckReport::summary() const {
    std::ostringstream out;
    out << (passed ? "PASS" : "FAIL") << " (tolerance " << tolerance << ")\n";
    for (const auto& e : entries)
        out << "  " << e.name << ": max rel err " << e.max_rel_error << " at index "
            << e.worst_index << "\n";
    return out.str();
}

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::vector<Parameter*> params,
                           double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;

    for (Parameter* p : params) p->zero_grad();
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = f(tape);
        tape.backward(loss);
    }
    for (Parameter* p : params) analytic.push_back(p->grad);

    const double h = 1e-5;
    bool all_ok = true;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        GradCheckEntry entry;
        entry.name = p->name;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double saved = p->value[i];
            p->value[i] = saved + h;
            double plus;
            {
                Tape tape;
                plus = tape.scalar_value(f(tape));
            }
            p->value[i] = saved - h;
            double minus;
            {
                Tape tape;
                minus = tape.scalar_value(f(tape));
            }
            p->value[i] = saved;
            double fd = (plus - minus) / (2.0 * h);
            double ad = analytic[pi][i];
            double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-3});
            if (rel > entry.max_rel_error) {
                entry.max_rel_error = rel;
                entry.worst_index = i;
            }
        }
        if (entry.max_rel_error > tolerance) all_ok = false;
        report.entries.push_back(entry);
    }
    report.passed = all_ok;
    return report;
}

}  // namespace hexplain
