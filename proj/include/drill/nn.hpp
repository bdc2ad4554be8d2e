#pragma once

// Minimal dense numeric layer: named parameter tensors with additive
// gradient accumulators, forward/backward kernels for the fixed
// architectures, SGD and Adam, and a flat text checkpoint format.
// Everything is 64-bit and deterministic.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drill/common.hpp"

namespace drill {

struct Tensor {
    std::string name;
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;  // values, row-major
    std::vector<double> g;  // gradient accumulator, same shape

    Tensor() = default;
    Tensor(std::string n, std::size_t r, std::size_t c)
        : name(std::move(n)), rows(r), cols(c), v(r * c, 0.0), g(r * c, 0.0) {}

    std::size_t size() const { return v.size(); }
    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    double& grad_at(std::size_t r, std::size_t c) { return g[r * cols + c]; }

    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }

    void fill_uniform(std::mt19937_64& rng, double lo, double hi) {
        std::uniform_real_distribution<double> dist(lo, hi);
        for (auto& x : v) x = dist(rng);
    }
};

using Params = std::vector<Tensor*>;

inline std::uint64_t params_checksum(const Params& params) {
    Checksum cs;
    for (const Tensor* t : params) {
        cs.add(t->name);
        cs.add(t->rows);
        cs.add(t->cols);
        cs.add(t->v);
    }
    return cs.value();
}

// --- forward/backward kernels -------------------------------------------

// mean of the embedding rows selected by token ids
inline std::vector<double> embedding_bag_forward(const std::vector<std::int32_t>& ids,
                                                 const Tensor& table) {
    if (ids.empty()) throw std::invalid_argument("embedding_bag: empty token list");
    std::vector<double> out(table.cols, 0.0);
    for (std::int32_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows)
            throw std::out_of_range("embedding_bag: token id out of range");
        const double* row = &table.v[static_cast<std::size_t>(id) * table.cols];
        for (std::size_t j = 0; j < table.cols; ++j) out[j] += row[j];
    }
    double inv = 1.0 / static_cast<double>(ids.size());
    for (auto& x : out) x *= inv;
    return out;
}

inline void embedding_bag_backward(const std::vector<std::int32_t>& ids, Tensor& table,
                                   const std::vector<double>& dout) {
    double inv = 1.0 / static_cast<double>(ids.size());
    for (std::int32_t id : ids) {
        double* grow = &table.g[static_cast<std::size_t>(id) * table.cols];
        for (std::size_t j = 0; j < table.cols; ++j) grow[j] += dout[j] * inv;
    }
}

// y = W x + b with W: (out x in)
inline std::vector<double> linear_forward(const Tensor& W, const Tensor& b,
                                          const std::vector<double>& x) {
    if (W.cols != x.size() || b.size() != W.rows)
        throw std::invalid_argument("linear_forward: shape mismatch");
    std::vector<double> y(W.rows);
    for (std::size_t r = 0; r < W.rows; ++r) {
        const double* wr = &W.v[r * W.cols];
        double acc = b.v[r];
        for (std::size_t c = 0; c < W.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
    return y;
}

// accumulates parameter gradients, returns dL/dx
inline std::vector<double> linear_backward(Tensor& W, Tensor& b, const std::vector<double>& x,
                                           const std::vector<double>& dy) {
    if (W.cols != x.size() || dy.size() != W.rows)
        throw std::invalid_argument("linear_backward: shape mismatch");
    std::vector<double> dx(W.cols, 0.0);
    for (std::size_t r = 0; r < W.rows; ++r) {
        double d = dy[r];
        double* gwr = &W.g[r * W.cols];
        const double* wr = &W.v[r * W.cols];
        for (std::size_t c = 0; c < W.cols; ++c) {
            gwr[c] += d * x[c];
            dx[c] += wr[c] * d;
        }
        b.g[r] += d;
    }
    return dx;
}

enum class Activation { relu, tanh_ };

inline std::vector<double> activation_forward(Activation kind, const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = kind == Activation::relu ? (x[i] > 0.0 ? x[i] : 0.0) : std::tanh(x[i]);
    return y;
}

// dx from dy given the forward input x and output y
inline std::vector<double> activation_backward(Activation kind, const std::vector<double>& x,
                                               const std::vector<double>& y,
                                               const std::vector<double>& dy) {
    std::vector<double> dx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        dx[i] = kind == Activation::relu ? (x[i] > 0.0 ? dy[i] : 0.0) : dy[i] * (1.0 - y[i] * y[i]);
    return dx;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& x : p) x /= sum;
    return p;
}

// fused softmax + negative log-likelihood for one row; probs_out receives
// the softmax distribution for the matching backward call
inline double softmax_xent_forward(const std::vector<double>& logits, int label,
                                   std::vector<double>& probs_out) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw std::out_of_range("softmax_xent: label out of range");
    probs_out = softmax(logits);
    double p = std::max(probs_out[static_cast<std::size_t>(label)], 1e-300);
    return -std::log(p);
}

// dL/dlogits = (softmax - onehot) * scale
inline std::vector<double> softmax_xent_backward(const std::vector<double>& probs, int label,
                                                 double scale) {
    std::vector<double> d(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) d[i] = probs[i] * scale;
    d[static_cast<std::size_t>(label)] -= scale;
    return d;
}

// batch form with mean reduction; returns mean loss, writes dL/dlogits rows
inline double softmax_xent_batch(const std::vector<std::vector<double>>& logits,
                                 const std::vector<int>& labels,
                                 std::vector<std::vector<double>>* dlogits = nullptr) {
    if (logits.empty() || logits.size() != labels.size())
        throw std::invalid_argument("softmax_xent_batch: shape mismatch");
    double scale = 1.0 / static_cast<double>(logits.size());
    double loss = 0.0;
    if (dlogits) dlogits->resize(logits.size());
    std::vector<double> probs;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        loss += softmax_xent_forward(logits[i], labels[i], probs);
        if (dlogits) (*dlogits)[i] = softmax_xent_backward(probs, labels[i], scale);
    }
    return loss * scale;
}

// --- optimizers -----------------------------------------------------------

// values -= lr * grad; gradients zeroed
inline void sgd_step(const Params& params, double lr) {
    for (Tensor* t : params) {
        for (std::size_t i = 0; i < t->v.size(); ++i) t->v[i] -= lr * t->g[i];
        t->zero_grad();
    }
}

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m, v;  // parallel to the param list

    void init(const Params& params) {
        m.clear();
        v.clear();
        for (const Tensor* p : params) {
            m.emplace_back(p->size(), 0.0);
            v.emplace_back(p->size(), 0.0);
        }
        t = 0;
    }
};

inline void adam_step(const Params& params, AdamState& state, double lr) {
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state mismatch");
    ++state.t;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor* p = params[k];
        if (state.m[k].size() != p->size())
            throw std::invalid_argument("adam_step: shape mismatch for " + p->name);
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p->size(); ++i) {
            double g = p->g[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p->v[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        p->zero_grad();
    }
}

// --- checkpoints ------------------------------------------------------------

// self-describing flat text: one header line per tensor (name rows cols)
// followed by row-major values at full precision
inline void save_params(std::ostream& out, const Params& params) {
    out << "params v1 " << params.size() << "\n";
    for (const Tensor* t : params) {
        out << t->name << ' ' << t->rows << ' ' << t->cols << '\n';
        for (std::size_t i = 0; i < t->v.size(); ++i) {
            if (i) out << ' ';
            out << format_double(t->v[i]);
        }
        out << '\n';
    }
}

inline void load_params(std::istream& in, const Params& params) {
    std::string tag, ver;
    std::size_t count = 0;
    in >> tag >> ver >> count;
    if (tag != "params" || ver != "v1")
        throw std::runtime_error("bad checkpoint header");
    if (count != params.size())
        throw std::runtime_error("checkpoint tensor count mismatch");
    for (Tensor* t : params) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        in >> name >> rows >> cols;
        if (name != t->name || rows != t->rows || cols != t->cols)
            throw std::runtime_error("checkpoint tensor '" + name + "' does not match '" +
                                     t->name + "'");
        for (auto& x : t->v)
            if (!(in >> x)) throw std::runtime_error("checkpoint truncated in " + name);
    }
}

}  // namespace drill
