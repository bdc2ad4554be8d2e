#pragma once

// Episodic memory: probabilistic write-balanced storage of stream samples,
// uniform with-replacement replay draws, and the episode generator that
// packages batches into support/query sets and schedules replay episodes.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "drill/common.hpp"
#include "drill/data.hpp"
#include "drill/stream.hpp"

namespace drill {

// p_max * min_j(n_j) / n_k: expected stored counts per task come out equal,
// and the smallest task stores at the full rate.
inline double write_probability(const std::vector<std::size_t>& task_sizes, std::size_t k,
                                double p_max) {
    if (k >= task_sizes.size()) throw std::out_of_range("write_probability: task index");
    if (p_max <= 0.0 || p_max > 1.0)
        throw std::invalid_argument("write_probability: p_max must be in (0,1]");
    std::size_t mn = task_sizes[0];
    for (std::size_t n : task_sizes) {
        if (n < 1) throw std::invalid_argument("write_probability: sizes must be >= 1");
        mn = std::min(mn, n);
    }
    return p_max * static_cast<double>(mn) / static_cast<double>(task_sizes[k]);
}

// R_F = ceil((R_I/s + 1)/b), computed exactly as ceil((R_I + s)/(s*b)).
inline std::size_t replay_frequency(std::size_t replay_interval, std::size_t batch_size,
                                    std::size_t episode_len) {
    if (replay_interval < 1 || batch_size < 1 || episode_len < 1)
        throw std::invalid_argument("replay_frequency: all inputs must be >= 1");
    std::size_t num = replay_interval + batch_size;
    std::size_t den = batch_size * episode_len;
    return (num + den - 1) / den;
}

struct ReplaySchedule {
    std::size_t replay_interval = 9600;  // R_I
    double replay_ratio = 0.01;          // r
    std::size_t batch_size = 8;          // s
    std::size_t episode_len = 6;         // b

    std::size_t frequency() const {
        return replay_frequency(replay_interval, batch_size, episode_len);
    }
    std::size_t draw_count() const {
        return static_cast<std::size_t>(std::floor(replay_ratio *
                                                   static_cast<double>(replay_interval)));
    }
    void validate() const {
        if (replay_ratio < 0.0 || replay_ratio > 1.0)
            throw std::invalid_argument("replay ratio must be in [0,1]");
        (void)frequency();
    }
};

class EpisodicMemory {
public:
    explicit EpisodicMemory(std::uint64_t seed) : rng_(make_rng(seed, "episodic_memory")) {}

    std::size_t size() const { return store_.size(); }
    bool empty() const { return store_.empty(); }
    const std::vector<Sample>& contents() const { return store_; }

    // Bernoulli write; returns whether the sample was stored.
    bool maybe_store(const Sample& s, double probability) {
        if (probability < 0.0 || probability > 1.0)
            throw std::invalid_argument("store probability must be in [0,1]");
        std::bernoulli_distribution coin(probability);
        if (!coin(rng_)) return false;
        store_.push_back(s);
        return true;
    }

    // Uniform with replacement, using the memory's own rng (training path).
    std::vector<Sample> draw(std::size_t count) { return draw_with(count, rng_); }

    // Same draw against an external rng; leaves the memory untouched, which
    // is what evaluation-time support draws require.
    std::vector<Sample> draw_with(std::size_t count, std::mt19937_64& rng) const {
        if (count == 0) return {};
        if (store_.empty()) throw std::runtime_error("episodic memory empty: no replay possible");
        std::uniform_int_distribution<std::size_t> pick(0, store_.size() - 1);
        std::vector<Sample> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) out.push_back(store_[pick(rng)]);
        return out;
    }

    std::uint64_t checksum() const {
        Checksum cs;
        cs.add(store_.size());
        for (const auto& s : store_) {
            cs.add(s.tokens.size());
            if (!s.tokens.empty())
                cs.add(s.tokens.data(), s.tokens.size() * sizeof(s.tokens[0]));
            cs.add(s.global_label);
        }
        return cs.value();
    }

    // debugging dump, same row layout as the corpus CSVs (class index is the
    // 1-based global label, tokens go in the description column)
    void dump_csv(std::ostream& out) const {
        for (const auto& s : store_) {
            std::string toks;
            for (std::size_t i = 0; i < s.tokens.size(); ++i) {
                if (i) toks += ' ';
                toks += std::to_string(s.tokens[i]);
            }
            out << (s.global_label + 1) << ",," << csv_escape(toks) << '\n';
        }
    }

private:
    std::vector<Sample> store_;
    std::mt19937_64 rng_;
};

// Write-probability policy. Oracle mode balances against the configured
// task sizes; adaptive mode balances against observed per-class counts and
// needs no prior knowledge of the schedule.
class WritePolicy {
public:
    enum class Mode { oracle, adaptive };

    WritePolicy(Mode mode, std::vector<std::size_t> task_sizes, double p_max)
        : mode_(mode), task_sizes_(std::move(task_sizes)), p_max_(p_max) {
        std::size_t acc = 0;
        for (std::size_t n : task_sizes_) {
            acc += n;
            boundaries_.push_back(acc);
        }
    }

    // advances the observation counter and returns this sample's p_E
    double next_probability(const Sample& s) {
        ++observed_;
        if (mode_ == Mode::oracle) {
            std::size_t k = 0;
            while (k < boundaries_.size() && observed_ > boundaries_[k]) ++k;
            if (k >= task_sizes_.size()) k = task_sizes_.size() - 1;
            return write_probability(task_sizes_, k, p_max_);
        }
        std::int64_t& cnt = class_counts_[s.global_label];
        ++cnt;
        std::int64_t mn = cnt;
        for (auto& [label, c] : class_counts_) mn = std::min(mn, c);
        return p_max_ * static_cast<double>(mn) / static_cast<double>(cnt);
    }

private:
    Mode mode_;
    std::vector<std::size_t> task_sizes_;
    std::vector<std::size_t> boundaries_;
    double p_max_;
    std::size_t observed_ = 0;
    std::map<int, std::int64_t> class_counts_;
};

struct Episode {
    enum class Kind { stream, replay };
    std::size_t index = 0;  // 1-based
    std::vector<std::vector<Sample>> support;  // up to b-1 batches
    std::vector<Sample> query;                 // one batch; oversized for replay
    Kind kind = Kind::stream;
};

// Pulls batches from the stream, offers every stream sample to memory, and
// emits episodes of b-1 support batches plus one query batch. Every R_F-th
// episode with a non-empty memory (checked at episode start) becomes a
// replay episode whose query is drawn from memory instead of the stream.
// The final episode may be truncated, including an empty query.
class EpisodeGenerator {
public:
    EpisodeGenerator(BatchStream& stream, EpisodicMemory& memory, ReplaySchedule schedule,
                     WritePolicy policy)
        : stream_(stream), memory_(memory), sched_(schedule), policy_(std::move(policy)) {
        sched_.validate();
    }

    std::size_t episodes_emitted() const { return episode_idx_; }
    std::size_t replay_samples_drawn() const { return replay_drawn_; }

    std::optional<Episode> next() {
        if (stream_.exhausted()) return std::nullopt;
        Episode ep;
        ep.index = ++episode_idx_;
        bool replay = (ep.index % sched_.frequency() == 0) && !memory_.empty();
        for (std::size_t i = 0; i + 1 < sched_.episode_len; ++i) {
            auto batch = pull_batch();
            if (!batch) break;
            ep.support.push_back(std::move(*batch));
        }
        if (replay) {
            ep.kind = Episode::Kind::replay;
            ep.query = memory_.draw(sched_.draw_count());
            replay_drawn_ += ep.query.size();
        } else {
            ep.kind = Episode::Kind::stream;
            if (auto batch = pull_batch()) ep.query = std::move(*batch);
        }
        return ep;
    }

private:
    BatchStream& stream_;
    EpisodicMemory& memory_;
    ReplaySchedule sched_;
    WritePolicy policy_;
    std::size_t episode_idx_ = 0;
    std::size_t replay_drawn_ = 0;

    std::optional<std::vector<Sample>> pull_batch() {
        auto batch = stream_.next_batch();
        if (batch)
            for (const auto& s : *batch) memory_.maybe_store(s, policy_.next_probability(s));
        return batch;
    }
};

}  // namespace drill
