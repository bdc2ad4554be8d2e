// Experiment runner CLI. Subcommands:
//   gen     write synthetic corpora to CSV files
//   run     one training run (method x order x strategy x seed)
//   matrix  the full experiment grid with aggregation
//
// Flags can also come from a key-value config file (--config); command-line
// values override file values. The output directory resolves as
// --out > $DRILL_OUT_DIR > ./runs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drill/experiment.hpp"

namespace {

struct CommonOpts {
    std::string out_dir;
    std::string data = "synth";
    std::string order = "I";
    std::string sampling = "R";
    std::string method = "drill_c";
    std::uint64_t seed = 42;
    std::string write_mode = "oracle";

    // hyperparameters; negative sentinel = keep preset default
    double inner_lr = -1, outer_lr = -1, baseline_lr = -1, p_max = -1, replay_ratio = -1;
    double pull_factor = -1;
    std::int64_t batch_size = -1, episode_len = -1, replay_interval = -1;
    std::int64_t repr_width = -1, embed_width = -1, hidden_width = -1, hash_vocab = -1;
    std::int64_t n0_reduction = -1, n0_expansion = -1;
    std::int64_t eval_episodes = -1, eval_support = -1, eval_steps = -1;

    // synthetic data shape
    std::int64_t synth_tasks = -1, synth_classes = -1, synth_samples = -1, synth_vocab = -1,
                 synth_test = -1, synth_seed = -1;
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->set_config("--config", "", "key-value config file; command-line flags override it");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--method", o.method,
                    "drill_m | drill_c | oml_er | seq | replay | mtl");
    cmd->add_option("--order", o.order, "task ordering I..IV");
    cmd->add_option("--sampling", o.sampling, "R (reduction) | E (expansion) | B (balanced)");
    cmd->add_option("--data", o.data,
                    "'synth' or a directory with <dataset>.train.csv / <dataset>.test.csv");
    cmd->add_option("--out,-o", o.out_dir, "output directory (default $DRILL_OUT_DIR or ./runs)");
    cmd->add_option("--write-mode", o.write_mode, "memory write balancing: oracle | adaptive");

    cmd->add_option("--batch-size", o.batch_size, "stream batch size s");
    cmd->add_option("--episode-len", o.episode_len, "batches per episode b");
    cmd->add_option("--inner-lr", o.inner_lr, "inner-loop SGD rate alpha");
    cmd->add_option("--outer-lr", o.outer_lr, "outer-loop Adam rate beta");
    cmd->add_option("--baseline-lr", o.baseline_lr, "SEQ/REPLAY/MTL Adam rate");
    cmd->add_option("--p-max", o.p_max, "maximum memory write probability");
    cmd->add_option("--replay-interval", o.replay_interval, "samples between rehearsals R_I");
    cmd->add_option("--replay-ratio", o.replay_ratio, "replay ratio r");
    cmd->add_option("--eta", o.pull_factor, "semantic memory pull factor");
    cmd->add_option("--d", o.repr_width, "representation width");
    cmd->add_option("--embed-width", o.embed_width, "embedding width");
    cmd->add_option("--hidden-width", o.hidden_width, "encoder hidden width");
    cmd->add_option("--hash-vocab", o.hash_vocab, "token hash space size");
    cmd->add_option("--n0-reduction", o.n0_reduction, "first-task size under reduction");
    cmd->add_option("--n0-expansion", o.n0_expansion, "first-task size under expansion");
    cmd->add_option("--eval-episodes", o.eval_episodes, "evaluation episodes");
    cmd->add_option("--eval-support", o.eval_support, "support samples per evaluation episode");
    cmd->add_option("--eval-steps", o.eval_steps, "fine-tune passes per evaluation episode");

    cmd->add_option("--synth-tasks", o.synth_tasks, "synthetic task count");
    cmd->add_option("--synth-classes", o.synth_classes, "classes per synthetic task");
    cmd->add_option("--synth-samples", o.synth_samples, "train samples per class");
    cmd->add_option("--synth-vocab", o.synth_vocab, "synthetic word types");
    cmd->add_option("--synth-test", o.synth_test, "test samples per class");
    cmd->add_option("--synth-seed", o.synth_seed, "synthetic corpus seed");
}

std::string resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("DRILL_OUT_DIR"); env && *env) return env;
    return "runs";
}

drill::RunConfig build_config(const CommonOpts& o) {
    drill::RunConfig cfg;
    if (o.data == "synth" || o.data == "synthetic") {
        cfg = drill::desk_synthetic_config();
    } else {
        cfg.data.kind = drill::DataSource::Kind::files;
        cfg.data.dir = o.data;
    }
    cfg.method = drill::parse_method(o.method);
    cfg.order = drill::parse_order_id(o.order);
    cfg.strategy = drill::parse_strategy(o.sampling);
    cfg.seed = o.seed;
    cfg.write_mode = o.write_mode == "adaptive" ? drill::WritePolicy::Mode::adaptive
                                                : drill::WritePolicy::Mode::oracle;
    if (o.inner_lr > 0) cfg.inner_lr = o.inner_lr;
    if (o.outer_lr > 0) cfg.outer_lr = o.outer_lr;
    if (o.baseline_lr > 0) cfg.baseline_lr = o.baseline_lr;
    if (o.p_max > 0) cfg.p_max = o.p_max;
    if (o.replay_ratio >= 0) cfg.replay_ratio = o.replay_ratio;
    if (o.pull_factor > 0) cfg.pull_factor = o.pull_factor;
    if (o.batch_size > 0) cfg.batch_size = static_cast<std::size_t>(o.batch_size);
    if (o.episode_len > 0) cfg.episode_len = static_cast<std::size_t>(o.episode_len);
    if (o.replay_interval > 0) cfg.replay_interval = static_cast<std::size_t>(o.replay_interval);
    if (o.repr_width > 0) cfg.rln.repr_width = static_cast<std::size_t>(o.repr_width);
    if (o.embed_width > 0) cfg.rln.embed_width = static_cast<std::size_t>(o.embed_width);
    if (o.hidden_width > 0) cfg.rln.hidden_width = static_cast<std::size_t>(o.hidden_width);
    if (o.hash_vocab > 0) {
        cfg.rln.vocab_size = static_cast<std::size_t>(o.hash_vocab);
        cfg.tokenizer.vocab_size = static_cast<std::size_t>(o.hash_vocab);
    }
    if (o.n0_reduction > 0) cfg.n0_reduction = static_cast<std::size_t>(o.n0_reduction);
    if (o.n0_expansion > 0) cfg.n0_expansion = static_cast<std::size_t>(o.n0_expansion);
    if (o.eval_episodes > 0) cfg.eval.episodes = static_cast<std::size_t>(o.eval_episodes);
    if (o.eval_support >= 0) cfg.eval.support_size = static_cast<std::size_t>(o.eval_support);
    if (o.eval_steps > 0) cfg.eval.fine_tune_steps = static_cast<std::size_t>(o.eval_steps);
    if (o.synth_tasks > 0) cfg.data.synth.num_tasks = static_cast<std::size_t>(o.synth_tasks);
    if (o.synth_classes > 0)
        cfg.data.synth.classes_per_task = static_cast<std::size_t>(o.synth_classes);
    if (o.synth_samples > 0)
        cfg.data.synth.samples_per_class = static_cast<std::size_t>(o.synth_samples);
    if (o.synth_vocab > 0) cfg.data.synth.vocab = static_cast<std::size_t>(o.synth_vocab);
    if (o.synth_test >= 0) cfg.data.synth.test_per_class = static_cast<std::size_t>(o.synth_test);
    if (o.synth_seed >= 0) cfg.data.synth.seed = static_cast<std::uint64_t>(o.synth_seed);
    return cfg;
}

int cmd_gen(const CommonOpts& o, bool benchmark_shape) {
    std::string out_dir = resolve_out_dir(o.out_dir);
    drill::RunConfig cfg = build_config(o);
    std::filesystem::create_directories(out_dir);
    if (benchmark_shape) {
        drill::SyntheticConfig sc = cfg.data.synth;
        if (o.synth_vocab <= 0) sc.vocab = 200;  // room for 33 signature slices
        if (o.synth_test < 0) sc.test_per_class = 30;
        auto rows = drill::synth_benchmark_rows(sc);
        for (const auto& [ds, pair] : rows) {
            std::ofstream tr(out_dir + "/" + ds + ".train.csv");
            drill::write_corpus_csv(tr, pair.first);
            std::ofstream te(out_dir + "/" + ds + ".test.csv");
            drill::write_corpus_csv(te, pair.second);
        }
        std::cout << "wrote benchmark-shaped corpora (" << rows.size() << " datasets, "
                  << sc.samples_per_class << " train samples per class) to " << out_dir << "\n";
        return 0;
    }
    drill::HashingTokenizer tok(cfg.tokenizer);
    drill::SyntheticData data = drill::synth_tasks(cfg.data.synth, tok);
    for (const auto& [ds, rows] : data.train_rows) {
        std::ofstream f(out_dir + "/" + ds + ".train.csv");
        drill::write_corpus_csv(f, rows);
    }
    for (const auto& [ds, rows] : data.test_rows) {
        std::ofstream f(out_dir + "/" + ds + ".test.csv");
        drill::write_corpus_csv(f, rows);
    }
    std::cout << "wrote " << data.train_rows.size() << " synthetic tasks ("
              << data.label_map.num_classes() << " classes) to " << out_dir << "\n";
    return 0;
}

int cmd_run(const CommonOpts& o, bool save_model) {
    std::string out_dir = resolve_out_dir(o.out_dir);
    drill::RunConfig cfg = build_config(o);
    drill::RunOutcome outcome = drill::execute_run(cfg, out_dir, save_model);
    if (!outcome.ok) {
        std::cerr << "run " << cfg.cell_name() << " failed: " << outcome.error << "\n";
        return 1;
    }
    std::cout << cfg.cell_name() << ": overall macro-F1 = " << outcome.f1_overall << "\n";
    for (const auto& [ds, f1] : outcome.f1_per_dataset)
        std::cout << "  " << ds << ": " << f1 << "\n";
    std::cout << "results: " << outcome.results_path << "\n";
    return 0;
}

int cmd_matrix(const CommonOpts& o, const std::vector<std::string>& methods,
               const std::vector<std::string>& orders, const std::vector<std::string>& samplings,
               const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
    std::string out_dir = resolve_out_dir(o.out_dir);
    drill::ExperimentMatrix matrix;
    matrix.base = build_config(o);
    for (const auto& m : methods) matrix.methods.push_back(drill::parse_method(m));
    for (const auto& ord : orders) matrix.orders.push_back(drill::parse_order_id(ord));
    for (const auto& s : samplings) matrix.strategies.push_back(drill::parse_strategy(s));
    matrix.seeds = seeds;

    drill::MatrixResults results = drill::run_matrix(matrix, out_dir, jobs);
    drill::write_matrix_outputs(results, out_dir);
    std::cout << drill::render_aggregate_table(drill::aggregate(results),
                                               drill::aggregate_columns(results));
    int failures = 0;
    for (const auto& r : results.runs)
        if (!r.ok) {
            ++failures;
            std::cerr << "failed: " << r.config.cell_name() << ": " << r.error << "\n";
        }
    std::cout << "results written to " << out_dir << "\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual-learning experiment runner"};
    app.set_config("--config", "", "key-value config file; flags override file values");
    app.require_subcommand(1);

    CommonOpts gen_opts, run_opts, matrix_opts;

    CLI::App* gen = app.add_subcommand("gen", "write synthetic corpora as CSV files");
    add_common_flags(gen, gen_opts);
    bool benchmark_shape = false;
    gen->add_flag("--benchmark-shape", benchmark_shape,
                  "emit the five benchmark datasets (33 classes, merged sentiment block)");

    CLI::App* run = app.add_subcommand("run", "execute a single training run");
    add_common_flags(run, run_opts);
    bool save_model = false;
    run->add_flag("--save-model", save_model, "write a model checkpoint next to the results");

    CLI::App* matrix = app.add_subcommand("matrix", "execute an experiment matrix");
    add_common_flags(matrix, matrix_opts);
    std::vector<std::string> methods{"drill_m", "drill_c", "oml_er", "seq", "replay", "mtl"};
    std::vector<std::string> orders{"I", "II", "III", "IV"};
    std::vector<std::string> samplings{"E", "R"};
    std::vector<std::uint64_t> seeds{42, 43, 44};
    std::size_t jobs = 1;
    matrix->add_option("--methods", methods, "methods to run");
    matrix->add_option("--orders", orders, "orderings to run");
    matrix->add_option("--samplings", samplings, "sampling strategies to run");
    matrix->add_option("--seeds", seeds, "seeds to run");
    matrix->add_option("--jobs,-j", jobs, "parallel runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_opts, benchmark_shape);
        if (run->parsed()) return cmd_run(run_opts, save_model);
        if (matrix->parsed())
            return cmd_matrix(matrix_opts, methods, orders, samplings, seeds, jobs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
