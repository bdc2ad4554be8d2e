#pragma once

// Experiment matrix: methods x orders x strategies x seeds, each cell one
// seeded run. Cells execute independently (optionally in parallel), write
// one structured results file plus a line-delimited training log, and the
// aggregator folds completed cells into the seed-mean / mu / sigma table.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "drill/trainer.hpp"

namespace drill {

using nlohmann::json;

inline json config_to_json(const RunConfig& cfg) {
    json j;
    j["method"] = method_name(cfg.method);
    j["order"] = order_name(cfg.order);
    j["strategy"] = strategy_name(cfg.strategy);
    j["seed"] = cfg.seed;
    j["n0_reduction"] = cfg.n0_reduction;
    j["n0_expansion"] = cfg.n0_expansion;
    j["batch_size"] = cfg.batch_size;
    j["episode_len"] = cfg.episode_len;
    j["inner_lr"] = cfg.inner_lr;
    j["outer_lr"] = cfg.outer_lr;
    j["baseline_lr"] = cfg.baseline_lr;
    j["p_max"] = cfg.p_max;
    j["replay_interval"] = cfg.replay_interval;
    j["replay_ratio"] = cfg.replay_ratio;
    j["epochs"] = cfg.epochs;
    j["mtl_epochs"] = cfg.mtl_epochs;
    j["pull_factor"] = cfg.pull_factor;
    j["soinn_max_age"] = cfg.soinn_max_age;
    j["soinn_period"] = cfg.soinn_period;
    j["rln"] = {{"vocab_size", cfg.rln.vocab_size},
                {"embed_width", cfg.rln.embed_width},
                {"hidden_width", cfg.rln.hidden_width},
                {"repr_width", cfg.rln.repr_width},
                {"activation", cfg.rln.activation == Activation::relu ? "relu" : "tanh"}};
    j["tokenizer"] = {{"vocab_size", cfg.tokenizer.vocab_size},
                      {"max_tokens", cfg.tokenizer.max_tokens}};
    j["eval"] = {{"episodes", cfg.eval.episodes},
                 {"support_size", cfg.eval.support_size},
                 {"fine_tune_steps", cfg.eval.fine_tune_steps}};
    j["write_mode"] = cfg.write_mode == WritePolicy::Mode::oracle ? "oracle" : "adaptive";
    if (cfg.data.kind == DataSource::Kind::synthetic) {
        const auto& s = cfg.data.synth;
        j["data"] = {{"kind", "synthetic"},
                     {"num_tasks", s.num_tasks},
                     {"classes_per_task", s.classes_per_task},
                     {"samples_per_class", s.samples_per_class},
                     {"vocab", s.vocab},
                     {"seed", s.seed},
                     {"test_per_class", s.test_per_class}};
    } else {
        j["data"] = {{"kind", "files"},
                     {"dir", cfg.data.dir},
                     {"test_per_dataset", cfg.data.test_per_dataset}};
    }
    return j;
}

inline void write_train_log(std::ostream& out, const TrainLog& log) {
    for (const auto& e : log.episodes) {
        json j;
        j["t"] = "episode";
        j["i"] = e.index;
        j["kind"] = std::string(1, e.kind);
        j["support_loss"] = e.support_loss;  // non-finite serializes as null
        j["query_loss"] = e.query_loss;
        j["mem"] = e.memory_size;
        j["soinn_nodes"] = e.soinn_nodes;
        out << j.dump() << '\n';
    }
    for (const auto& p : log.probes) {
        json j;
        j["t"] = "probe";
        j["task"] = p.task_position;
        j["seen"] = p.samples_seen;
        j["f1"] = p.per_dataset_f1;
        out << j.dump() << '\n';
    }
    for (const auto& n : log.notes) out << json{{"t", "note"}, {"msg", n}}.dump() << '\n';
}

// --- model checkpoints -------------------------------------------------------

// parameter dump + semantic memory dump + config echo, one text artifact
inline void save_checkpoint(std::ostream& out, DrillModel& model, const SoinnNetwork* semantic,
                            const json& config_echo) {
    out << "drill-checkpoint v1\n";
    out << "config " << config_echo.dump() << '\n';
    save_params(out, model.all_params());
    if (semantic) semantic->dump(out);
}

// loads into a model built from the echoed config; returns the semantic
// memory (when present) and the config echo
inline std::pair<std::optional<SoinnNetwork>, json> load_checkpoint(std::istream& in,
                                                                    DrillModel& model) {
    std::string line;
    if (!std::getline(in, line) || line != "drill-checkpoint v1")
        throw std::runtime_error("bad checkpoint header");
    if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
        throw std::runtime_error("checkpoint missing config echo");
    json echo = json::parse(line.substr(7));
    load_params(in, model.all_params());
    in >> std::ws;
    std::optional<SoinnNetwork> net;
    if (in.peek() != std::char_traits<char>::eof()) net = SoinnNetwork::parse(in);
    return {std::move(net), std::move(echo)};
}

struct RunOutcome {
    RunConfig config;
    bool ok = false;
    std::string error;
    double f1_overall = 0.0;
    std::map<std::string, double> f1_per_dataset;
    std::vector<double> episode_f1;
    std::size_t episodes = 0;
    std::size_t stream_samples = 0;
    std::size_t replay_samples = 0;
    double wallclock_s = 0.0;
    std::string results_path;
    std::string log_path;
};

// Executes one cell end to end and writes <name>.json + <name>.log.jsonl
// (plus <name>.ckpt when asked).
inline RunOutcome execute_run(const RunConfig& cfg, const std::string& out_dir,
                              bool save_model = false) {
    RunOutcome out;
    out.config = cfg;
    auto t0 = std::chrono::steady_clock::now();
    try {
        DataBundle data = prepare_data(cfg);
        TrainResult trained = train(cfg, data);
        EvalResult eval = evaluate(cfg, trained, data);
        out.ok = true;
        out.f1_overall = eval.overall_f1;
        out.f1_per_dataset = eval.per_dataset_f1;
        out.episode_f1 = eval.episode_f1;
        out.episodes = trained.episodes;
        out.stream_samples = trained.stream_samples;
        out.replay_samples = trained.replay_samples;
        out.wallclock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        std::filesystem::create_directories(out_dir);
        std::string base = cfg.cell_name();
        out.results_path = out_dir + "/" + base + ".json";
        out.log_path = out_dir + "/" + base + ".log.jsonl";
        {
            std::ofstream lf(out.log_path);
            write_train_log(lf, trained.log);
        }
        if (save_model) {
            std::ofstream cf(out_dir + "/" + base + ".ckpt");
            save_checkpoint(cf, trained.model, trained.semantic ? &*trained.semantic : nullptr,
                            config_to_json(cfg));
        }
        json j;
        j["config"] = config_to_json(cfg);
        j["f1_overall"] = out.f1_overall;
        j["f1_per_dataset"] = out.f1_per_dataset;
        j["per_episode_f1"] = out.episode_f1;
        j["zero_shot"] = eval.zero_shot;
        j["episodes"] = out.episodes;
        j["outer_updates"] = trained.outer_updates;
        j["stream_samples"] = out.stream_samples;
        j["replay_samples"] = out.replay_samples;
        j["wallclock_s"] = out.wallclock_s;
        j["log_path"] = base + ".log.jsonl";  // relative, so reruns reproduce bit-identically
        std::ofstream rf(out.results_path);
        rf << j.dump(2) << '\n';
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        out.wallclock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return out;
}

// All deterministic fields must reproduce bit-identically across reruns;
// wall-clock time is the documented exception.
inline bool results_equal_ignoring_wallclock(const std::string& path_a,
                                             const std::string& path_b) {
    std::ifstream fa(path_a), fb(path_b);
    if (!fa || !fb) return false;
    json ja = json::parse(fa), jb = json::parse(fb);
    ja.erase("wallclock_s");
    jb.erase("wallclock_s");
    return ja == jb;
}

struct ExperimentMatrix {
    std::vector<Method> methods;
    std::vector<char> orders;
    std::vector<Strategy> strategies;
    std::vector<std::uint64_t> seeds;
    RunConfig base;

    std::vector<RunConfig> cells() const {
        std::vector<RunConfig> out;
        for (Method m : methods)
            for (char o : orders)
                for (Strategy st : strategies)
                    for (std::uint64_t seed : seeds) {
                        RunConfig c = base;
                        c.method = m;
                        c.order = o;
                        c.strategy = st;
                        c.seed = seed;
                        out.push_back(c);
                    }
        return out;
    }
};

struct MatrixResults {
    std::vector<RunOutcome> runs;  // matrix definition order
    bool all_ok() const {
        for (const auto& r : runs)
            if (!r.ok) return false;
        return !runs.empty();
    }
};

inline MatrixResults run_matrix(const ExperimentMatrix& matrix, const std::string& out_dir,
                                std::size_t parallelism = 1) {
    std::vector<RunConfig> cells = matrix.cells();
    MatrixResults results;
    results.runs.resize(cells.size());
    std::atomic<std::size_t> next{0};
    std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, cells.size()));
    auto work = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            results.runs[i] = execute_run(cells[i], out_dir);
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return results;
}

// --- aggregation ------------------------------------------------------------

struct AggregateRow {
    std::string method;
    // cell key "E-I".."R-IV" -> seed-mean F1; absent key = gap
    std::map<std::string, double> cells;
    std::optional<double> mu, sigma;  // population sigma over present cells
};

inline std::string cell_key(Strategy st, char order) {
    return strategy_name(st) + "-" + order_name(order);
}

inline std::vector<AggregateRow> aggregate(const MatrixResults& results) {
    // method -> cell key -> f1 values across seeds
    std::map<std::string, std::map<std::string, std::vector<double>>> acc;
    std::vector<std::string> method_order;
    for (const auto& r : results.runs) {
        std::string m = method_name(r.config.method);
        if (acc.find(m) == acc.end()) method_order.push_back(m);
        auto& row = acc[m];  // method row exists even if every cell failed
        if (r.ok) row[cell_key(r.config.strategy, r.config.order)].push_back(r.f1_overall);
    }
    std::vector<AggregateRow> rows;
    for (const auto& m : method_order) {
        AggregateRow row;
        row.method = m;
        for (const auto& [key, vals] : acc[m]) {
            double mean = 0.0;
            for (double v : vals) mean += v;
            row.cells[key] = mean / static_cast<double>(vals.size());
        }
        if (!row.cells.empty()) {
            double mu = 0.0;
            for (const auto& [k, v] : row.cells) mu += v;
            mu /= static_cast<double>(row.cells.size());
            double var = 0.0;
            for (const auto& [k, v] : row.cells) var += (v - mu) * (v - mu);
            var /= static_cast<double>(row.cells.size());
            row.mu = mu;
            row.sigma = std::sqrt(var);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<std::string> aggregate_columns(const MatrixResults& results) {
    std::vector<std::string> cols;
    std::vector<Strategy> strategies;
    std::vector<char> orders;
    for (const auto& r : results.runs) {
        if (std::find(strategies.begin(), strategies.end(), r.config.strategy) ==
            strategies.end())
            strategies.push_back(r.config.strategy);
        if (std::find(orders.begin(), orders.end(), r.config.order) == orders.end())
            orders.push_back(r.config.order);
    }
    for (Strategy st : strategies)
        for (char o : orders) cols.push_back(cell_key(st, o));
    return cols;
}

inline void write_results_csv(std::ostream& out, const MatrixResults& results) {
    std::vector<std::string> datasets;
    for (const auto& r : results.runs)
        for (const auto& [ds, f1] : r.f1_per_dataset)
            if (std::find(datasets.begin(), datasets.end(), ds) == datasets.end())
                datasets.push_back(ds);
    std::sort(datasets.begin(), datasets.end());
    out << "method,order,strategy,seed,f1_overall";
    for (const auto& ds : datasets) out << ",f1_" << ds;
    out << ",episodes,wallclock_s\n";
    for (const auto& r : results.runs) {
        out << method_name(r.config.method) << ',' << order_name(r.config.order) << ','
            << strategy_name(r.config.strategy) << ',' << r.config.seed << ',';
        if (r.ok) out << format_double(r.f1_overall);
        for (const auto& ds : datasets) {
            out << ',';
            auto it = r.f1_per_dataset.find(ds);
            if (r.ok && it != r.f1_per_dataset.end()) out << format_double(it->second);
        }
        out << ',' << r.episodes << ',' << format_double(r.wallclock_s) << '\n';
    }
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows,
                                const std::vector<std::string>& columns) {
    out << "method";
    for (const auto& c : columns) out << ',' << c;
    out << ",mu,sigma\n";
    for (const auto& row : rows) {
        out << row.method;
        for (const auto& c : columns) {
            out << ',';
            auto it = row.cells.find(c);
            if (it != row.cells.end()) out << format_double(it->second);
        }
        out << ',';
        if (row.mu) out << format_double(*row.mu);
        out << ',';
        if (row.sigma) out << format_double(*row.sigma);
        out << '\n';
    }
}

inline std::string render_aggregate_table(const std::vector<AggregateRow>& rows,
                                          const std::vector<std::string>& columns) {
    std::ostringstream out;
    auto fmt = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << v * 100.0;
        return s.str();
    };
    out << std::left << std::setw(10) << "method";
    for (const auto& c : columns) out << std::right << std::setw(8) << c;
    out << std::right << std::setw(8) << "mu" << std::setw(8) << "sigma" << '\n';
    for (const auto& row : rows) {
        out << std::left << std::setw(10) << row.method;
        for (const auto& c : columns) {
            auto it = row.cells.find(c);
            out << std::right << std::setw(8) << (it != row.cells.end() ? fmt(it->second) : "--");
        }
        out << std::right << std::setw(8) << (row.mu ? fmt(*row.mu) : "--");
        out << std::right << std::setw(8) << (row.sigma ? fmt(*row.sigma) : "--") << '\n';
    }
    return out.str();
}

inline void write_matrix_outputs(const MatrixResults& results, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream f(out_dir + "/results.csv");
        write_results_csv(f, results);
    }
    auto rows = aggregate(results);
    auto cols = aggregate_columns(results);
    {
        std::ofstream f(out_dir + "/aggregate.csv");
        write_aggregate_csv(f, rows, cols);
    }
    std::ofstream f(out_dir + "/aggregate.txt");
    f << render_aggregate_table(rows, cols);
}

}  // namespace drill
