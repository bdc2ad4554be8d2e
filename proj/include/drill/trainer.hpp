#pragma once

// Single-pass training for all methods and the episode-based evaluation
// protocol. Meta methods (the two gated variants and the ungated
// meta-rehearsal baseline) run the inner/outer loop over generated episodes;
// SEQ and REPLAY run plain minibatch updates over the stream; MTL trains on
// the shuffled union of all tasks.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "drill/common.hpp"
#include "drill/data.hpp"
#include "drill/episodic_memory.hpp"
#include "drill/metrics.hpp"
#include "drill/model.hpp"
#include "drill/nn.hpp"
#include "drill/soinn.hpp"
#include "drill/stream.hpp"
#include "drill/synthetic.hpp"

namespace drill {

enum class Method { drill_m, drill_c, oml_er, seq, replay, mtl };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::drill_m: return "drill_m";
        case Method::drill_c: return "drill_c";
        case Method::oml_er: return "oml_er";
        case Method::seq: return "seq";
        case Method::replay: return "replay";
        case Method::mtl: return "mtl";
    }
    throw std::logic_error("bad method");
}

inline Method parse_method(const std::string& s) {
    if (s == "drill_m" || s == "DRILL_M") return Method::drill_m;
    if (s == "drill_c" || s == "DRILL_C") return Method::drill_c;
    if (s == "oml_er" || s == "OML-ER" || s == "oml-er") return Method::oml_er;
    if (s == "seq" || s == "SEQ") return Method::seq;
    if (s == "replay" || s == "REPLAY") return Method::replay;
    if (s == "mtl" || s == "MTL") return Method::mtl;
    throw std::invalid_argument("unknown method '" + s + "'");
}

inline bool is_meta(Method m) {
    return m == Method::drill_m || m == Method::drill_c || m == Method::oml_er;
}

inline Variant variant_for(Method m) {
    switch (m) {
        case Method::drill_m: return Variant::drill_m;
        case Method::drill_c: return Variant::drill_c;
        default: return Variant::ungated;
    }
}

struct EvalProtocol {
    std::size_t episodes = 5;
    std::size_t support_size = 96;  // mirrors floor(r * R_I) at paper defaults
    std::size_t fine_tune_steps = 1;
};

struct DataSource {
    enum class Kind { synthetic, files };
    Kind kind = Kind::synthetic;
    SyntheticConfig synth;
    std::string dir;                       // <dir>/<dataset>.train.csv / .test.csv
    std::size_t test_per_dataset = 7600;   // file mode: seeded draw when larger
};

struct RunConfig {
    Method method = Method::drill_c;
    char order = '1';
    Strategy strategy = Strategy::reduction;
    std::uint64_t seed = 42;

    std::size_t n0_reduction = 115000;
    std::size_t n0_expansion = 7187;
    std::size_t batch_size = 8;   // s
    std::size_t episode_len = 6;  // b
    double inner_lr = 8e-3;       // alpha, inner-loop SGD
    double outer_lr = 1.5e-5;     // beta, outer-loop Adam
    double baseline_lr = 1e-5;    // SEQ / REPLAY / MTL Adam
    double p_max = 0.8;
    std::size_t replay_interval = 9600;  // R_I
    double replay_ratio = 0.01;          // r
    std::size_t epochs = 1;
    std::size_t mtl_epochs = 2;

    double pull_factor = 50.0;  // eta
    int soinn_max_age = 50;
    std::int64_t soinn_period = 200;

    RlnConfig rln;
    TokenizerConfig tokenizer;
    EvalProtocol eval;
    WritePolicy::Mode write_mode = WritePolicy::Mode::oracle;
    DataSource data;
    bool verify_contracts = false;  // per-episode freeze/thaw checksum assertions

    std::size_t n0_for(Strategy s) const {
        return s == Strategy::expansion ? n0_expansion : n0_reduction;
    }

    void validate() const {
        if (inner_lr <= 0 || outer_lr <= 0 || baseline_lr <= 0)
            throw std::invalid_argument("learning rates must be > 0");
        if (replay_ratio < 0.0 || replay_ratio > 1.0)
            throw std::invalid_argument("replay ratio must be in [0,1]");
        if (epochs != 1)
            throw std::invalid_argument("stream methods are single-epoch by contract");
        if (batch_size < 1 || episode_len < 1)
            throw std::invalid_argument("batch size and episode length must be >= 1");
        rln.validate(variant_for(method));
    }

    std::string cell_name() const {
        return method_name(method) + "_" + order_name(order) + "_" + strategy_name(strategy) +
               "_" + std::to_string(seed);
    }
};

// Desk-scale preset for synthetic runs. The paper's learning rates and
// replay schedule assume a pretrained encoder and a 222k-sample stream;
// from-scratch training on a ~1k stream needs faster optimizers and a
// replay interval that actually fits inside the stream, so the synthetic
// preset rescales those knobs. File-mode defaults keep the paper values.
inline RunConfig desk_synthetic_config() {
    RunConfig cfg;
    cfg.n0_reduction = 500;
    cfg.n0_expansion = 31;
    cfg.inner_lr = 0.08;
    cfg.outer_lr = 1e-2;
    cfg.baseline_lr = 5e-3;
    cfg.replay_interval = 24;  // R_F = ceil((24/8 + 1)/6) = 1 on a ~1k stream
    cfg.replay_ratio = 1.0;    // 24-sample replay draws
    cfg.eval.fine_tune_steps = 10;
    cfg.rln.vocab_size = 4096;
    cfg.rln.embed_width = 32;
    cfg.rln.hidden_width = 32;
    cfg.rln.repr_width = 32;
    cfg.tokenizer.vocab_size = 4096;
    cfg.data.kind = DataSource::Kind::synthetic;
    cfg.data.synth.num_tasks = 5;
    cfg.data.synth.classes_per_task = 3;
    cfg.data.synth.samples_per_class = 200;
    cfg.data.synth.vocab = 60;
    cfg.data.synth.test_per_class = 30;
    cfg.data.synth.seed = 1234;  // corpus fixed across run seeds
    return cfg;
}

// --- data preparation -------------------------------------------------------

struct DataBundle {
    std::map<std::string, std::vector<Sample>> train;
    std::map<std::string, std::vector<Sample>> test;
    LabelMap label_map;
    std::vector<std::string> ordering;  // dataset per task position
    std::vector<std::size_t> sizes;     // n_k per task position
};

inline DataBundle prepare_data(const RunConfig& cfg) {
    DataBundle b;
    HashingTokenizer tok(cfg.tokenizer);
    if (cfg.data.kind == DataSource::Kind::synthetic) {
        SyntheticData sd = synth_tasks(cfg.data.synth, tok);
        b.train = std::move(sd.train);
        b.test = std::move(sd.test);
        b.label_map = sd.label_map;
        std::vector<std::string> canonical;
        for (std::size_t t = 0; t < cfg.data.synth.num_tasks; ++t)
            canonical.push_back("task" + std::to_string(t));
        b.ordering = apply_ordering(cfg.order, canonical);
    } else {
        b.label_map = LabelMap::paper_benchmark();
        b.ordering = ordering_for(cfg.order);
        for (const auto& ds : b.ordering) {
            b.train[ds] = load_corpus(cfg.data.dir + "/" + ds + ".train.csv", ds, b.label_map, tok);
            auto full = load_corpus(cfg.data.dir + "/" + ds + ".test.csv", ds, b.label_map, tok);
            if (full.size() > cfg.data.test_per_dataset) {
                std::vector<std::size_t> idx(full.size());
                std::iota(idx.begin(), idx.end(), 0);
                auto rng = make_rng(cfg.seed, "test_split." + ds);
                std::shuffle(idx.begin(), idx.end(), rng);
                std::vector<Sample> cut;
                cut.reserve(cfg.data.test_per_dataset);
                for (std::size_t i = 0; i < cfg.data.test_per_dataset; ++i)
                    cut.push_back(full[idx[i]]);
                b.test[ds] = std::move(cut);
            } else {
                b.test[ds] = std::move(full);
            }
        }
    }
    b.sizes = progressive_sizes(cfg.n0_for(cfg.strategy), cfg.strategy, b.ordering.size());
    return b;
}

// --- logs & results -----------------------------------------------------------

struct EpisodeRecord {
    std::size_t index = 0;
    char kind = 's';  // 's' stream, 'r' replay
    double support_loss = std::nan("");
    double query_loss = std::nan("");
    std::size_t memory_size = 0;
    std::size_t soinn_nodes = 0;
};

struct ProbeRecord {
    std::size_t task_position = 0;  // 1-based boundary just crossed
    std::size_t samples_seen = 0;
    std::map<std::string, double> per_dataset_f1;  // direct prediction
};

struct TrainLog {
    std::vector<EpisodeRecord> episodes;
    std::vector<ProbeRecord> probes;
    std::vector<std::string> notes;
};

struct TrainResult {
    DrillModel model;
    std::optional<SoinnNetwork> semantic;
    EpisodicMemory memory;
    TrainLog log;
    std::size_t episodes = 0;
    std::size_t outer_updates = 0;
    std::size_t stream_samples = 0;
    std::size_t replay_samples = 0;
    bool phi_changed_by_outer = false;
};

struct EvalResult {
    double overall_f1 = 0.0;
    std::map<std::string, double> per_dataset_f1;
    std::vector<double> episode_f1;
    bool zero_shot = false;
};

// --- inner / outer updates -----------------------------------------------------

// One SGD step on the head per support batch; encoder gradients are
// discarded, so phi stays bit-identical.
inline double inner_update(DrillModel& model, const std::vector<std::vector<Sample>>& support,
                           SoinnNetwork* semantic, double alpha) {
    Params pln = model.pln_params();
    Params rln = model.rln_params();
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& batch : support) {
        if (batch.empty()) continue;
        total += model.training_loss(batch, semantic, true);
        sgd_step(pln, alpha);
        for (Tensor* t : rln) t->zero_grad();
        ++n;
    }
    return n ? total / static_cast<double>(n) : std::nan("");
}

// One Adam step on all parameters from the query loss. No-op for an empty
// query (truncated final episode).
inline double outer_update(DrillModel& model, const std::vector<Sample>& query,
                           SoinnNetwork* semantic, AdamState& state, double beta) {
    if (query.empty()) return std::nan("");
    double loss = model.training_loss(query, semantic, true);
    adam_step(model.all_params(), state, beta);
    return loss;
}

// --- evaluation ------------------------------------------------------------------

namespace detail {

struct ScoreBoard {
    ConfusionMatrix overall;
    std::map<std::string, ConfusionMatrix> per_dataset;

    explicit ScoreBoard(int C) : overall(C) {}

    void add(const std::string& ds, int gold, int pred, int C) {
        overall.add(gold, pred);
        auto it = per_dataset.find(ds);
        if (it == per_dataset.end()) it = per_dataset.emplace(ds, ConfusionMatrix(C)).first;
        it->second.add(gold, pred);
    }
};

inline void score_test_sets(const DrillModel& model, const SoinnNetwork* semantic,
                            const DataBundle& data, ScoreBoard& board) {
    int C = data.label_map.num_classes();
    for (const auto& [ds, samples] : data.test) {
        if (samples.empty()) throw std::invalid_argument("empty test set for '" + ds + "'");
        for (const Sample& s : samples)
            board.add(ds, s.global_label, model.predict(s, semantic), C);
    }
}

inline std::map<std::string, double> per_dataset_f1(const ScoreBoard& board,
                                                    const LabelMap& lm) {
    std::map<std::string, double> out;
    for (const auto& [ds, cm] : board.per_dataset) {
        const LabelMap::Block& blk = lm.block(ds);
        out[ds] = cm.macro_f1_block(blk.offset, blk.count);
    }
    return out;
}

}  // namespace detail

// Direct-prediction scores, used for mid-run probes and for the
// non-episodic baselines.
inline EvalResult direct_evaluate(const DrillModel& model, const SoinnNetwork* semantic,
                                  const DataBundle& data) {
    detail::ScoreBoard board(data.label_map.num_classes());
    detail::score_test_sets(model, semantic, data, board);
    EvalResult r;
    r.overall_f1 = board.overall.macro_f1();
    r.per_dataset_f1 = detail::per_dataset_f1(board, data.label_map);
    r.episode_f1 = {r.overall_f1};
    return r;
}

// The evaluation protocol. Meta methods run `episodes` rounds: clone the
// model and semantic memory, fine-tune the head on a support draw from
// episodic memory, score the full test sets, discard the clone; scores are
// averaged over rounds. Baselines score directly. Side-effect free on the
// trained model and both memories.
inline EvalResult evaluate(const RunConfig& cfg, const TrainResult& trained,
                           const DataBundle& data) {
    if (data.test.empty()) throw std::invalid_argument("evaluate: no test sets");
    if (!is_meta(cfg.method)) return direct_evaluate(trained.model, nullptr, data);

    EvalResult mean;
    auto rng = make_rng(cfg.seed, "eval.support");
    std::size_t rounds = std::max<std::size_t>(1, cfg.eval.episodes);
    for (std::size_t e = 0; e < rounds; ++e) {
        DrillModel clone = trained.model;
        std::optional<SoinnNetwork> semantic_clone = trained.semantic;
        SoinnNetwork* ms = semantic_clone ? &*semantic_clone : nullptr;
        if (!trained.memory.empty() && cfg.eval.support_size > 0) {
            std::vector<Sample> support =
                trained.memory.draw_with(cfg.eval.support_size, rng);
            std::vector<std::vector<Sample>> batches;
            for (std::size_t i = 0; i < support.size(); i += cfg.batch_size) {
                std::size_t n = std::min(cfg.batch_size, support.size() - i);
                batches.emplace_back(support.begin() + static_cast<std::ptrdiff_t>(i),
                                     support.begin() + static_cast<std::ptrdiff_t>(i + n));
            }
            for (std::size_t step = 0; step < cfg.eval.fine_tune_steps; ++step)
                inner_update(clone, batches, ms, cfg.inner_lr);
        } else {
            mean.zero_shot = true;  // nothing to fine-tune on
        }
        detail::ScoreBoard board(data.label_map.num_classes());
        detail::score_test_sets(clone, ms, data, board);
        mean.episode_f1.push_back(board.overall.macro_f1());
        mean.overall_f1 += board.overall.macro_f1();
        for (const auto& [ds, f1] : detail::per_dataset_f1(board, data.label_map))
            mean.per_dataset_f1[ds] += f1;
    }
    mean.overall_f1 /= static_cast<double>(rounds);
    for (auto& [ds, f1] : mean.per_dataset_f1) f1 /= static_cast<double>(rounds);
    return mean;
}

// --- training --------------------------------------------------------------------

namespace detail {

class ProbeTracker {
public:
    ProbeTracker(const DataBundle& data, TrainLog& log) : data_(data), log_(log) {
        std::size_t acc = 0;
        for (std::size_t n : data.sizes) {
            acc += n;
            boundaries_.push_back(acc);
        }
    }

    void check(std::size_t emitted, const DrillModel& model, const SoinnNetwork* semantic) {
        while (next_ < boundaries_.size() && emitted >= boundaries_[next_]) {
            EvalResult probe = direct_evaluate(model, semantic, data_);
            ProbeRecord rec;
            rec.task_position = next_ + 1;
            rec.samples_seen = emitted;
            rec.per_dataset_f1 = probe.per_dataset_f1;
            log_.probes.push_back(std::move(rec));
            ++next_;
        }
    }

private:
    const DataBundle& data_;
    TrainLog& log_;
    std::vector<std::size_t> boundaries_;
    std::size_t next_ = 0;
};

inline void train_meta(const RunConfig& cfg, const DataBundle& data, TrainResult& out) {
    StreamPlan plan{data.ordering, data.sizes, cfg.strategy, cfg.seed};
    BatchStream stream(data.train, plan, cfg.batch_size);
    ReplaySchedule sched{cfg.replay_interval, cfg.replay_ratio, cfg.batch_size, cfg.episode_len};
    WritePolicy policy(cfg.write_mode, data.sizes, cfg.p_max);
    EpisodeGenerator gen(stream, out.memory, sched, policy);
    SoinnNetwork* ms = out.semantic ? &*out.semantic : nullptr;
    AdamState outer_state;
    outer_state.init(out.model.all_params());
    ProbeTracker probes(data, out.log);

    while (auto ep = gen.next()) {
        std::uint64_t phi_before = 0;
        if (cfg.verify_contracts) phi_before = out.model.rln_checksum();
        double support_loss = inner_update(out.model, ep->support, ms, cfg.inner_lr);
        if (cfg.verify_contracts && out.model.rln_checksum() != phi_before)
            throw std::logic_error("contract violation: inner update touched the encoder");
        double query_loss = outer_update(out.model, ep->query, ms, outer_state, cfg.outer_lr);
        if (!ep->query.empty()) {
            ++out.outer_updates;
            if (cfg.verify_contracts && out.model.rln_checksum() != phi_before)
                out.phi_changed_by_outer = true;
        }
        EpisodeRecord rec;
        rec.index = ep->index;
        rec.kind = ep->kind == Episode::Kind::replay ? 'r' : 's';
        rec.support_loss = support_loss;
        rec.query_loss = query_loss;
        rec.memory_size = out.memory.size();
        rec.soinn_nodes = ms ? ms->node_count() : 0;
        out.log.episodes.push_back(rec);
        ++out.episodes;
        probes.check(stream.emitted(), out.model, ms);
    }
    out.stream_samples = stream.emitted();
    out.replay_samples = gen.replay_samples_drawn();
}

inline void train_baseline(const RunConfig& cfg, const DataBundle& data, TrainResult& out) {
    StreamPlan plan{data.ordering, data.sizes, cfg.strategy, cfg.seed};
    BatchStream stream(data.train, plan, cfg.batch_size);
    const bool rehearse = cfg.method == Method::replay;
    ReplaySchedule sched{cfg.replay_interval, cfg.replay_ratio, cfg.batch_size, cfg.episode_len};
    WritePolicy policy(cfg.write_mode, data.sizes, cfg.p_max);
    const std::size_t replay_grid = sched.frequency() * cfg.episode_len;  // in batches
    AdamState state;
    state.init(out.model.all_params());
    ProbeTracker probes(data, out.log);

    std::size_t batches = 0;
    while (auto batch = stream.next_batch()) {
        if (rehearse)
            for (const auto& s : *batch) out.memory.maybe_store(s, policy.next_probability(s));
        double loss = out.model.training_loss(*batch, nullptr, false);
        adam_step(out.model.all_params(), state, cfg.baseline_lr);
        ++batches;
        EpisodeRecord rec;
        rec.index = batches;
        rec.kind = 's';
        rec.query_loss = loss;
        rec.memory_size = out.memory.size();
        out.log.episodes.push_back(rec);

        if (rehearse && batches % replay_grid == 0 && !out.memory.empty()) {
            std::vector<Sample> rb = out.memory.draw(sched.draw_count());
            if (!rb.empty()) {
                double rloss = out.model.training_loss(rb, nullptr, false);
                adam_step(out.model.all_params(), state, cfg.baseline_lr);
                out.replay_samples += rb.size();
                EpisodeRecord rrec;
                rrec.index = batches;
                rrec.kind = 'r';
                rrec.query_loss = rloss;
                rrec.memory_size = out.memory.size();
                out.log.episodes.push_back(rrec);
            }
        }
        probes.check(stream.emitted(), out.model, nullptr);
    }
    out.stream_samples = stream.emitted();
    out.episodes = batches;
}

inline void train_mtl(const RunConfig& cfg, const DataBundle& data, TrainResult& out) {
    if (cfg.replay_interval > 0 && cfg.method == Method::mtl)
        out.log.notes.push_back("mtl: replay/memory parameters ignored");
    // same per-task draws as the stream methods, then a shuffled union
    StreamPlan plan{data.ordering, data.sizes, cfg.strategy, cfg.seed};
    BatchStream stream(data.train, plan, cfg.batch_size);
    std::vector<Sample> pool;
    pool.reserve(plan.total());
    while (auto batch = stream.next_batch())
        for (auto& s : *batch) pool.push_back(std::move(s));
    out.stream_samples = pool.size();

    AdamState state;
    state.init(out.model.all_params());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.mtl_epochs; ++epoch) {
        auto rng = make_rng(cfg.seed, "mtl.shuffle." + std::to_string(epoch));
        std::shuffle(pool.begin(), pool.end(), rng);
        for (std::size_t i = 0; i < pool.size(); i += cfg.batch_size) {
            std::size_t n = std::min(cfg.batch_size, pool.size() - i);
            std::vector<Sample> batch(pool.begin() + static_cast<std::ptrdiff_t>(i),
                                      pool.begin() + static_cast<std::ptrdiff_t>(i + n));
            double loss = out.model.training_loss(batch, nullptr, false);
            adam_step(out.model.all_params(), state, cfg.baseline_lr);
            EpisodeRecord rec;
            rec.index = ++step;
            rec.kind = 's';
            rec.query_loss = loss;
            out.log.episodes.push_back(rec);
        }
    }
    out.episodes = step;
}

}  // namespace detail

inline TrainResult train(const RunConfig& cfg, const DataBundle& data) {
    cfg.validate();
    RlnConfig rln = cfg.rln;
    std::size_t C = static_cast<std::size_t>(data.label_map.num_classes());
    TrainResult out{
        DrillModel(rln, C, variant_for(cfg.method), derive_seed(cfg.seed, "model.init")),
        std::nullopt,
        EpisodicMemory(derive_seed(cfg.seed, "memory")),
        TrainLog{},
    };
    if (cfg.method == Method::drill_m || cfg.method == Method::drill_c) {
        SoinnConfig sc;
        sc.dim = rln.repr_width;
        sc.pull_factor = cfg.pull_factor;
        sc.max_edge_age = cfg.soinn_max_age;
        sc.deletion_period = cfg.soinn_period;
        out.semantic.emplace(sc);
    }
    switch (cfg.method) {
        case Method::drill_m:
        case Method::drill_c:
        case Method::oml_er:
            detail::train_meta(cfg, data, out);
            break;
        case Method::seq:
        case Method::replay:
            detail::train_baseline(cfg, data, out);
            break;
        case Method::mtl:
            detail::train_mtl(cfg, data, out);
            break;
    }
    return out;
}

}  // namespace drill
