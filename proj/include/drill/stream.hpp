#pragma once

// Single-pass sample stream: per-task sizes from the progressive
// reduction/expansion schedules, seeded without-replacement draws per task,
// concatenated task-after-task and emitted in batches.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "drill/common.hpp"
#include "drill/data.hpp"

namespace drill {

enum class Strategy { reduction, expansion, balanced };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::reduction: return "R";
        case Strategy::expansion: return "E";
        case Strategy::balanced: return "B";
    }
    throw std::logic_error("bad strategy");
}

inline Strategy parse_strategy(const std::string& s) {
    if (s == "R" || s == "r" || s == "reduction") return Strategy::reduction;
    if (s == "E" || s == "e" || s == "expansion") return Strategy::expansion;
    if (s == "B" || s == "b" || s == "balanced") return Strategy::balanced;
    throw std::invalid_argument("unknown sampling strategy '" + s + "'");
}

// n_{k+1} = floor(n_k / 2) under reduction, 2 * n_k under expansion,
// constant n0 when balanced.
inline std::vector<std::size_t> progressive_sizes(std::size_t n0, Strategy strategy,
                                                  std::size_t num_tasks) {
    if (n0 < 1) throw std::invalid_argument("progressive_sizes: n0 must be >= 1");
    if (num_tasks < 1) throw std::invalid_argument("progressive_sizes: N must be >= 1");
    std::vector<std::size_t> sizes;
    sizes.reserve(num_tasks);
    std::size_t n = n0;
    for (std::size_t k = 0; k < num_tasks; ++k) {
        sizes.push_back(n);
        switch (strategy) {
            case Strategy::reduction: n = n / 2; break;
            case Strategy::expansion: n = n * 2; break;
            case Strategy::balanced: break;
        }
    }
    return sizes;
}

struct StreamPlan {
    std::vector<std::string> ordering;  // dataset ids, task position order
    std::vector<std::size_t> sizes;     // n_k per position
    Strategy strategy = Strategy::balanced;
    std::uint64_t seed = 0;

    void validate() const {
        if (ordering.size() != sizes.size())
            throw std::invalid_argument("StreamPlan: ordering and sizes length mismatch");
        for (std::size_t n : sizes)
            if (n < 1) throw std::invalid_argument("StreamPlan: sizes must all be >= 1");
    }

    std::size_t total() const {
        return std::accumulate(sizes.begin(), sizes.end(), std::size_t(0));
    }

    // prefix sums, used for task boundary probes and write-probability lookup
    std::vector<std::size_t> boundaries() const {
        std::vector<std::size_t> b;
        std::size_t acc = 0;
        for (std::size_t n : sizes) {
            acc += n;
            b.push_back(acc);
        }
        return b;
    }
};

// Materialized single-pass stream. Sample order within a task is a seeded
// uniform shuffle; tasks are concatenated in plan order. Emitted samples
// carry only (tokens, global_label) -- the source tag is stripped so nothing
// downstream can condition on task identity.
class BatchStream {
public:
    BatchStream(const std::map<std::string, std::vector<Sample>>& corpora, const StreamPlan& plan,
                std::size_t batch_size)
        : batch_size_(batch_size) {
        plan.validate();
        if (batch_size_ < 1) throw std::invalid_argument("batch size must be >= 1");
        for (std::size_t k = 0; k < plan.ordering.size(); ++k) {
            const std::string& ds = plan.ordering[k];
            auto it = corpora.find(ds);
            if (it == corpora.end())
                throw std::invalid_argument("no corpus for dataset '" + ds + "'");
            const auto& corpus = it->second;
            std::size_t want = plan.sizes[k];
            if (corpus.size() < want)
                throw std::runtime_error("task " + std::to_string(k + 1) + " ('" + ds +
                                         "') requests " + std::to_string(want) +
                                         " samples but corpus holds " +
                                         std::to_string(corpus.size()));
            std::vector<std::size_t> idx(corpus.size());
            std::iota(idx.begin(), idx.end(), 0);
            auto rng = make_rng(plan.seed, "stream.task." + std::to_string(k));
            std::shuffle(idx.begin(), idx.end(), rng);
            for (std::size_t i = 0; i < want; ++i) {
                Sample s = corpus[idx[i]];
                s.source_dataset.clear();
                seq_.push_back(std::move(s));
            }
        }
    }

    std::size_t total() const { return seq_.size(); }
    std::size_t emitted() const { return pos_; }
    bool exhausted() const { return pos_ >= seq_.size(); }

    // next batch of up to batch_size samples; the final partial batch is
    // emitted as-is
    std::optional<std::vector<Sample>> next_batch() {
        if (exhausted()) return std::nullopt;
        std::size_t n = std::min(batch_size_, seq_.size() - pos_);
        std::vector<Sample> batch(seq_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  seq_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return batch;
    }

private:
    std::vector<Sample> seq_;
    std::size_t pos_ = 0;
    std::size_t batch_size_;
};

}  // namespace drill
