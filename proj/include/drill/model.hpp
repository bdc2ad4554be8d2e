#pragma once

// The trainable model: a small encoder (embedding bag -> hidden linear ->
// activation -> linear to d) playing the representation network, and a
// classifier head playing the prediction network. Two knowledge-integration
// variants wire semantic-memory signals into the head: elementwise
// multiplication, or projection of both signals to d/2 and concatenation.
// Gate signals are constants in the gradient graph; the semantic memory is
// trained only by its own rule.

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "drill/data.hpp"
#include "drill/nn.hpp"
#include "drill/soinn.hpp"

namespace drill {

enum class Variant { drill_m, drill_c, ungated };

struct RlnConfig {
    std::size_t vocab_size = std::size_t(1) << 15;
    std::size_t embed_width = 64;
    std::size_t hidden_width = 64;
    std::size_t repr_width = 64;  // d
    Activation activation = Activation::relu;

    void validate(Variant v) const {
        if (vocab_size < 1 || embed_width < 1 || hidden_width < 1 || repr_width < 1)
            throw std::invalid_argument("RlnConfig: widths must be >= 1");
        if (v == Variant::drill_c && repr_width % 2 != 0)
            throw std::invalid_argument("RlnConfig: d must be even for the concatenation variant");
    }
};

struct GateSignal {
    enum class Provenance { top2_first, top2_second, eval_winner, fallback };
    std::vector<double> w;
    Provenance provenance = Provenance::fallback;
};

class DrillModel {
public:
    DrillModel(RlnConfig rln, std::size_t num_classes, Variant variant, std::uint64_t seed)
        : cfg_(rln), num_classes_(num_classes), variant_(variant) {
        cfg_.validate(variant);
        if (num_classes_ < 2) throw std::invalid_argument("need at least 2 classes");
        const std::size_t d = cfg_.repr_width;
        embed_ = Tensor("rln.embed", cfg_.vocab_size, cfg_.embed_width);
        w1_ = Tensor("rln.w1", cfg_.hidden_width, cfg_.embed_width);
        b1_ = Tensor("rln.b1", 1, cfg_.hidden_width);
        w2_ = Tensor("rln.w2", d, cfg_.hidden_width);
        b2_ = Tensor("rln.b2", 1, d);
        head_w_ = Tensor("pln.head.w", num_classes_, d);
        head_b_ = Tensor("pln.head.b", 1, num_classes_);
        if (variant_ == Variant::drill_c) {
            proj_gate_w_ = Tensor("pln.proj_gate.w", d / 2, d);
            proj_gate_b_ = Tensor("pln.proj_gate.b", 1, d / 2);
            proj_repr_w_ = Tensor("pln.proj_repr.w", d / 2, d);
            proj_repr_b_ = Tensor("pln.proj_repr.b", 1, d / 2);
        }
        init_weights(seed);
    }

    const RlnConfig& config() const { return cfg_; }
    Variant variant() const { return variant_; }
    std::size_t num_classes() const { return num_classes_; }
    std::size_t repr_width() const { return cfg_.repr_width; }

    // encoder parameters (phi) -- frozen in the inner loop
    Params rln_params() {
        return {&embed_, &w1_, &b1_, &w2_, &b2_};
    }
    // head parameters (W) -- fine-tuned in the inner loop
    Params pln_params() {
        Params p{&head_w_, &head_b_};
        if (variant_ == Variant::drill_c) {
            p.push_back(&proj_gate_w_);
            p.push_back(&proj_gate_b_);
            p.push_back(&proj_repr_w_);
            p.push_back(&proj_repr_b_);
        }
        return p;
    }
    Params all_params() {
        Params p = rln_params();
        for (Tensor* t : pln_params()) p.push_back(t);
        return p;
    }

    std::uint64_t rln_checksum() {
        return params_checksum(rln_params());
    }
    std::uint64_t pln_checksum() {
        return params_checksum(pln_params());
    }
    std::uint64_t checksum() {
        return params_checksum(all_params());
    }

    void zero_grads() {
        for (Tensor* t : all_params()) t->zero_grad();
    }

    // --- encoder ----------------------------------------------------------

    struct EncodeTrace {
        const std::vector<std::int32_t>* tokens = nullptr;
        std::vector<double> pooled, pre1, act1, repr;
    };

    EncodeTrace encode_traced(const Sample& s) const {
        EncodeTrace t;
        t.tokens = &s.tokens;
        t.pooled = embedding_bag_forward(s.tokens, embed_);
        t.pre1 = linear_forward(w1_, b1_, t.pooled);
        t.act1 = activation_forward(cfg_.activation, t.pre1);
        t.repr = linear_forward(w2_, b2_, t.act1);
        return t;
    }

    std::vector<double> encode(const Sample& s) const { return encode_traced(s).repr; }

    // accumulates phi gradients from dL/drepr
    void backward_encode(const EncodeTrace& t, const std::vector<double>& drepr) {
        std::vector<double> dact1 = linear_backward(w2_, b2_, t.act1, drepr);
        std::vector<double> dpre1 = activation_backward(cfg_.activation, t.pre1, t.act1, dact1);
        std::vector<double> dpooled = linear_backward(w1_, b1_, t.pooled, dpre1);
        embedding_bag_backward(*t.tokens, embed_, dpooled);
    }

    // --- gated heads --------------------------------------------------------

    GateSignal fallback_gate() const {
        GateSignal g;
        g.provenance = GateSignal::Provenance::fallback;
        // multiplicative identity for the product path, neutral zero for the
        // concatenation slot
        g.w.assign(cfg_.repr_width, variant_ == Variant::drill_m ? 1.0 : 0.0);
        return g;
    }

    std::vector<double> forward_m(const std::vector<double>& repr,
                                  const std::vector<double>& gate) const {
        if (gate.size() != repr.size() || repr.size() != cfg_.repr_width)
            throw std::invalid_argument("forward_m: dimension mismatch");
        std::vector<double> z(repr.size());
        for (std::size_t i = 0; i < repr.size(); ++i) z[i] = gate[i] * repr[i];
        return linear_forward(head_w_, head_b_, z);
    }

    std::vector<double> forward_c(const std::vector<double>& repr,
                                  const std::vector<double>& gate) const {
        if (variant_ != Variant::drill_c)
            throw std::logic_error("forward_c: model built without projection layers");
        if (gate.size() != repr.size() || repr.size() != cfg_.repr_width)
            throw std::invalid_argument("forward_c: dimension mismatch");
        std::vector<double> ug = linear_forward(proj_gate_w_, proj_gate_b_, gate);
        std::vector<double> uh = linear_forward(proj_repr_w_, proj_repr_b_, repr);
        std::vector<double> u;
        u.reserve(ug.size() + uh.size());
        u.insert(u.end(), ug.begin(), ug.end());
        u.insert(u.end(), uh.begin(), uh.end());
        return linear_forward(head_w_, head_b_, u);
    }

    std::vector<double> forward_ungated(const std::vector<double>& repr) const {
        return linear_forward(head_w_, head_b_, repr);
    }

    // logits for one (repr, gate) pair under the model's variant
    std::vector<double> forward_variant(const std::vector<double>& repr,
                                        const std::vector<double>& gate) const {
        switch (variant_) {
            case Variant::drill_m: return forward_m(repr, gate);
            case Variant::drill_c: return forward_c(repr, gate);
            case Variant::ungated: return forward_ungated(repr);
        }
        throw std::logic_error("bad variant");
    }

    // --- training loss --------------------------------------------------------

    // Mean cross-entropy over the batch. For gated variants each sample is
    // scored through the class-conditional top-2 gate signals and the two
    // path losses are averaged; gradients accumulate over both paths. Each
    // representation is offered to the semantic memory exactly once, after
    // retrieval and before the gated forwards; pass learn=false to keep the
    // memory frozen (gradient checks, oracles).
    double training_loss(const std::vector<Sample>& batch, SoinnNetwork* semantic,
                         bool learn = true) {
        if (batch.empty()) throw std::invalid_argument("training_loss: empty batch");
        const double inv_batch = 1.0 / static_cast<double>(batch.size());
        double total = 0.0;
        for (const Sample& s : batch) {
            EncodeTrace trace = encode_traced(s);
            std::vector<GateSignal> gates = retrieve_train_gates(s.global_label, semantic);
            if (learn && semantic && variant_ != Variant::ungated)
                semantic->learn(trace.repr, s.global_label);
            const double path_weight = inv_batch / static_cast<double>(gates.size());
            std::vector<double> drepr(cfg_.repr_width, 0.0);
            double sample_loss = 0.0;
            for (const GateSignal& gate : gates)
                sample_loss += forward_backward_path(trace, gate.w, s.global_label, path_weight,
                                                     drepr);
            total += sample_loss / static_cast<double>(gates.size());
            backward_encode(trace, drepr);
        }
        return total * inv_batch;
    }

    // --- evaluation -------------------------------------------------------------

    // Label-free prediction: the gate is the BMU of the current
    // representation (or the fallback when the memory is empty / absent).
    // Performs no writes anywhere.
    std::vector<double> eval_logits(const Sample& s, const SoinnNetwork* semantic) const {
        std::vector<double> repr = encode(s);
        if (variant_ == Variant::ungated) return forward_ungated(repr);
        GateSignal gate = fallback_gate();
        if (semantic && !semantic->empty()) {
            const SoinnNode* win = semantic->winner_for(repr);
            gate.w = win->w;
            gate.provenance = GateSignal::Provenance::eval_winner;
        }
        return forward_variant(repr, gate.w);
    }

    int predict(const Sample& s, const SoinnNetwork* semantic) const {
        std::vector<double> logits = eval_logits(s, semantic);
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = i;
        return static_cast<int>(best);
    }

    void save(std::ostream& out) {
        save_params(out, all_params());
    }
    void load(std::istream& in) {
        load_params(in, all_params());
    }

private:
    RlnConfig cfg_;
    std::size_t num_classes_;
    Variant variant_;
    Tensor embed_, w1_, b1_, w2_, b2_;
    Tensor head_w_, head_b_;
    Tensor proj_gate_w_, proj_gate_b_, proj_repr_w_, proj_repr_b_;

    void init_weights(std::uint64_t seed) {
        auto glorot = [&](Tensor& t, std::size_t fan_in, std::size_t fan_out) {
            auto rng = make_rng(seed, "init." + t.name);
            double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            t.fill_uniform(rng, -a, a);
        };
        glorot(embed_, 1, cfg_.embed_width);
        glorot(w1_, cfg_.embed_width, cfg_.hidden_width);
        glorot(w2_, cfg_.hidden_width, cfg_.repr_width);
        glorot(head_w_, cfg_.repr_width, num_classes_);
        if (variant_ == Variant::drill_c) {
            glorot(proj_gate_w_, cfg_.repr_width, cfg_.repr_width / 2);
            glorot(proj_repr_w_, cfg_.repr_width, cfg_.repr_width / 2);
        }
        // biases stay zero
    }

    // Training-time gates: the two most frequent BMUs for the class. Missing
    // slots fall back to the neutral signal; ungated models use a single
    // identity path.
    std::vector<GateSignal> retrieve_train_gates(int label, const SoinnNetwork* semantic) const {
        if (variant_ == Variant::ungated) return {fallback_gate()};
        std::vector<GateSignal> gates(2, fallback_gate());
        if (semantic) {
            SoinnNetwork::Top2 top = semantic->top2_for_class(label);
            if (top.first) {
                gates[0].w = top.first->w;  // copy: learn() may move the node
                gates[0].provenance = GateSignal::Provenance::top2_first;
            }
            if (top.second) {
                gates[1].w = top.second->w;
                gates[1].provenance = GateSignal::Provenance::top2_second;
            }
        }
        return gates;
    }

    // One gated forward + backward. Adds path_weight-scaled gradients to the
    // head (and projections), accumulates dL/drepr, returns the raw path
    // loss.
    double forward_backward_path(const EncodeTrace& trace, const std::vector<double>& gate,
                                 int label, double path_weight, std::vector<double>& drepr) {
        std::vector<double> probs;
        if (variant_ == Variant::drill_m || variant_ == Variant::ungated) {
            std::vector<double> z;
            const std::vector<double>* head_in = &trace.repr;
            if (variant_ == Variant::drill_m) {
                z.resize(trace.repr.size());
                for (std::size_t i = 0; i < z.size(); ++i) z[i] = gate[i] * trace.repr[i];
                head_in = &z;
            }
            std::vector<double> logits = linear_forward(head_w_, head_b_, *head_in);
            double loss = softmax_xent_forward(logits, label, probs);
            std::vector<double> dlogits = softmax_xent_backward(probs, label, path_weight);
            std::vector<double> dhead_in = linear_backward(head_w_, head_b_, *head_in, dlogits);
            if (variant_ == Variant::drill_m) {
                for (std::size_t i = 0; i < drepr.size(); ++i) drepr[i] += dhead_in[i] * gate[i];
            } else {
                for (std::size_t i = 0; i < drepr.size(); ++i) drepr[i] += dhead_in[i];
            }
            return loss;
        }
        // concatenation variant
        std::vector<double> ug = linear_forward(proj_gate_w_, proj_gate_b_, gate);
        std::vector<double> uh = linear_forward(proj_repr_w_, proj_repr_b_, trace.repr);
        std::vector<double> u;
        u.reserve(ug.size() + uh.size());
        u.insert(u.end(), ug.begin(), ug.end());
        u.insert(u.end(), uh.begin(), uh.end());
        std::vector<double> logits = linear_forward(head_w_, head_b_, u);
        double loss = softmax_xent_forward(logits, label, probs);
        std::vector<double> dlogits = softmax_xent_backward(probs, label, path_weight);
        std::vector<double> du = linear_backward(head_w_, head_b_, u, dlogits);
        std::vector<double> dug(du.begin(), du.begin() + static_cast<std::ptrdiff_t>(ug.size()));
        std::vector<double> duh(du.begin() + static_cast<std::ptrdiff_t>(ug.size()), du.end());
        // gate projection is trainable even though the gate itself is constant
        linear_backward(proj_gate_w_, proj_gate_b_, gate, dug);
        std::vector<double> dh = linear_backward(proj_repr_w_, proj_repr_b_, trace.repr, duh);
        for (std::size_t i = 0; i < drepr.size(); ++i) drepr[i] += dh[i];
        return loss;
    }
};

}  // namespace drill
