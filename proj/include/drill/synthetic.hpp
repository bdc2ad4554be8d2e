#pragma once

// Desk-scale synthetic corpora: each class is a distinct token-frequency
// profile (a private slice of signature words plus shared noise), so the
// classes are linearly separable under a bag-of-tokens encoder.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "drill/common.hpp"
#include "drill/data.hpp"

namespace drill {

struct SyntheticConfig {
    std::size_t num_tasks = 5;
    std::size_t classes_per_task = 3;
    std::size_t samples_per_class = 20;
    std::size_t vocab = 50;  // distinct word types, not the hash space
    std::uint64_t seed = 42;
    std::size_t test_per_class = 0;  // disjoint test split, 0 = none
    double signature_prob = 0.75;
    std::size_t min_len = 10, max_len = 20;
};

struct SyntheticData {
    std::map<std::string, std::vector<Sample>> train;
    std::map<std::string, std::vector<Sample>> test;
    std::map<std::string, std::vector<CsvRow>> train_rows;  // CSV-serializable form
    std::map<std::string, std::vector<CsvRow>> test_rows;
    LabelMap label_map;
};

namespace detail {

inline CsvRow synth_row(int local_class_1based, int global_label, std::size_t sig_per_class,
                        std::size_t num_classes, const SyntheticConfig& cfg,
                        std::mt19937_64& rng) {
    std::size_t sig_total = sig_per_class * num_classes;
    std::size_t shared = cfg.vocab > sig_total ? cfg.vocab - sig_total : 0;
    std::size_t sig_base = static_cast<std::size_t>(global_label) * sig_per_class;

    std::uniform_int_distribution<std::size_t> len_dist(cfg.min_len, cfg.max_len);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> sig_dist(0, sig_per_class - 1);

    std::size_t len = len_dist(rng);
    std::vector<std::string> words;
    words.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        std::size_t w;
        if (shared == 0 || coin(rng) < cfg.signature_prob) {
            w = sig_base + sig_dist(rng);
        } else {
            std::uniform_int_distribution<std::size_t> shared_dist(0, shared - 1);
            w = sig_total + shared_dist(rng);
        }
        words.push_back("w" + std::to_string(w));
    }
    CsvRow row;
    row.class_index = local_class_1based;
    std::size_t title_len = std::min<std::size_t>(3, words.size());
    for (std::size_t i = 0; i < title_len; ++i) {
        if (i) row.title += ' ';
        row.title += words[i];
    }
    for (std::size_t i = title_len; i < words.size(); ++i) {
        if (i > title_len) row.description += ' ';
        row.description += words[i];
    }
    return row;
}

}  // namespace detail

// Synthetic stand-ins for the five benchmark datasets: same file layout,
// same per-dataset class counts, and one shared 33-class signature space so
// the merged sentiment datasets really do share class profiles. Useful for
// exercising the file-mode pipeline at desk scale.
inline std::map<std::string, std::pair<std::vector<CsvRow>, std::vector<CsvRow>>>
synth_benchmark_rows(const SyntheticConfig& cfg) {
    LabelMap lm = LabelMap::paper_benchmark();
    std::size_t num_classes = static_cast<std::size_t>(lm.num_classes());
    std::size_t sig_per_class = std::max<std::size_t>(2, cfg.vocab / (2 * num_classes));
    if (sig_per_class * num_classes > cfg.vocab)
        throw std::invalid_argument("benchmark-shape generation needs vocab >= " +
                                    std::to_string(2 * num_classes));
    std::map<std::string, std::pair<std::vector<CsvRow>, std::vector<CsvRow>>> out;
    for (const auto& [ds, block] : lm.blocks()) {
        auto rng = make_rng(cfg.seed, "synth_benchmark." + ds);
        auto& [train_rows, test_rows] = out[ds];
        for (int c = 1; c <= block.count; ++c) {
            int global = lm.global_label(ds, c);
            for (std::size_t i = 0; i < cfg.samples_per_class; ++i)
                train_rows.push_back(
                    detail::synth_row(c, global, sig_per_class, num_classes, cfg, rng));
            for (std::size_t i = 0; i < cfg.test_per_class; ++i)
                test_rows.push_back(
                    detail::synth_row(c, global, sig_per_class, num_classes, cfg, rng));
        }
    }
    return out;
}

// Deterministic given the config seed. Signature slices are disjoint across
// the global label space; samples mix signature and shared words.
inline SyntheticData synth_tasks(const SyntheticConfig& cfg, const HashingTokenizer& tokenizer) {
    if (cfg.num_tasks < 1 || cfg.classes_per_task < 1 || cfg.samples_per_class < 1 ||
        cfg.vocab < 1)
        throw std::invalid_argument("synth_tasks: all counts must be >= 1");
    SyntheticData data;
    data.label_map = LabelMap::synthetic(cfg.num_tasks, cfg.classes_per_task);
    std::size_t num_classes = cfg.num_tasks * cfg.classes_per_task;
    std::size_t sig_per_class = std::max<std::size_t>(2, cfg.vocab / (2 * num_classes));
    if (sig_per_class * num_classes > cfg.vocab) {
        // vocab too small for disjoint slices plus noise: wrap signatures
        sig_per_class = std::max<std::size_t>(1, cfg.vocab / num_classes);
        if (sig_per_class * num_classes > cfg.vocab)
            throw std::invalid_argument("synth_tasks: vocab smaller than class count");
    }

    for (std::size_t t = 0; t < cfg.num_tasks; ++t) {
        std::string ds = "task" + std::to_string(t);
        auto rng = make_rng(cfg.seed, "synth." + ds);
        std::vector<CsvRow> train_rows, test_rows;
        for (std::size_t c = 0; c < cfg.classes_per_task; ++c) {
            int local = static_cast<int>(c) + 1;
            int global = data.label_map.global_label(ds, local);
            for (std::size_t i = 0; i < cfg.samples_per_class; ++i)
                train_rows.push_back(
                    detail::synth_row(local, global, sig_per_class, num_classes, cfg, rng));
            for (std::size_t i = 0; i < cfg.test_per_class; ++i)
                test_rows.push_back(
                    detail::synth_row(local, global, sig_per_class, num_classes, cfg, rng));
        }
        auto to_samples = [&](const std::vector<CsvRow>& rows) {
            std::vector<Sample> out;
            out.reserve(rows.size());
            for (const auto& r : rows) {
                Sample s;
                s.tokens = tokenizer.tokenize(r.title + " " + r.description);
                s.global_label = data.label_map.global_label(ds, r.class_index);
                s.source_dataset = ds;
                out.push_back(std::move(s));
            }
            return out;
        };
        data.train[ds] = to_samples(train_rows);
        data.test[ds] = to_samples(test_rows);
        data.train_rows[ds] = std::move(train_rows);
        data.test_rows[ds] = std::move(test_rows);
    }
    return data;
}

}  // namespace drill
