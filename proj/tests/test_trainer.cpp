#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "drill/experiment.hpp"
#include "drill/trainer.hpp"

using namespace drill;

namespace {

RunConfig tiny_config(Method m, std::uint64_t seed = 42) {
    RunConfig cfg = desk_synthetic_config();
    cfg.method = m;
    cfg.seed = seed;
    cfg.data.synth.num_tasks = 2;
    cfg.data.synth.classes_per_task = 2;
    cfg.data.synth.samples_per_class = 60;
    cfg.data.synth.vocab = 30;
    cfg.data.synth.test_per_class = 15;
    cfg.n0_reduction = 100;  // task sizes 100, 50
    cfg.rln.vocab_size = 512;
    cfg.rln.embed_width = 16;
    cfg.rln.hidden_width = 16;
    cfg.rln.repr_width = 16;
    cfg.tokenizer.vocab_size = 512;
    cfg.replay_interval = 96;  // R_F = ceil((96/8 + 1)/6) = 3
    cfg.replay_ratio = 0.25;   // 24-sample draws
    return cfg;
}

std::string temp_dir(const std::string& tag) {
    static int counter = 0;
    auto p = std::filesystem::temp_directory_path() /
             ("drill_trainer_" + std::to_string(::getpid()) + "_" + tag + "_" +
              std::to_string(counter++));
    std::filesystem::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("inner update fine-tunes the head only") {
    RunConfig cfg = tiny_config(Method::drill_c);
    DataBundle data = prepare_data(cfg);
    DrillModel model(cfg.rln, data.label_map.num_classes(), Variant::drill_c, 1);
    std::vector<Sample> batch(data.train.at("task0").begin(),
                              data.train.at("task0").begin() + 8);

    SECTION("phi checksum identical before and after") {
        std::uint64_t phi = model.rln_checksum();
        std::uint64_t pln = model.pln_checksum();
        inner_update(model, {batch}, nullptr, 0.05);
        REQUIRE(model.rln_checksum() == phi);
        REQUIRE(model.pln_checksum() != pln);
    }
    SECTION("one batch, one step: W' = W - alpha * grad (oracle recompute)") {
        DrillModel ref = model;
        ref.training_loss(batch, nullptr, false);
        std::map<std::string, std::vector<double>> want;
        for (Tensor* t : ref.pln_params()) {
            std::vector<double> w(t->v.size());
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = t->v[i] - 0.05 * t->g[i];
            want[t->name] = std::move(w);
        }
        inner_update(model, {batch}, nullptr, 0.05);
        for (Tensor* t : model.pln_params()) REQUIRE(t->v == want[t->name]);
    }
    SECTION("empty support is a no-op") {
        std::uint64_t before = model.checksum();
        double loss = inner_update(model, {}, nullptr, 0.05);
        REQUIRE(std::isnan(loss));
        REQUIRE(model.checksum() == before);
    }
}

TEST_CASE("outer update moves all parameters") {
    RunConfig cfg = tiny_config(Method::drill_c);
    DataBundle data = prepare_data(cfg);
    DrillModel model(cfg.rln, data.label_map.num_classes(), Variant::drill_c, 1);
    std::vector<Sample> query(data.train.at("task0").begin(),
                              data.train.at("task0").begin() + 8);

    SECTION("phi changes after a non-degenerate query batch") {
        AdamState state;
        state.init(model.all_params());
        std::uint64_t phi = model.rln_checksum();
        outer_update(model, query, nullptr, state, 1e-3);
        REQUIRE(model.rln_checksum() != phi);
    }
    SECTION("empty query is a no-op") {
        AdamState state;
        state.init(model.all_params());
        std::uint64_t before = model.checksum();
        REQUIRE(std::isnan(outer_update(model, {}, nullptr, state, 1e-3)));
        REQUIRE(model.checksum() == before);
    }
    SECTION("parameter delta matches a straight-line Adam oracle") {
        DrillModel ref = model;
        ref.training_loss(query, nullptr, false);
        std::map<std::string, std::vector<double>> want;
        const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        for (Tensor* t : ref.all_params()) {
            std::vector<double> w(t->v.size());
            for (std::size_t i = 0; i < w.size(); ++i) {
                double g = t->g[i];
                double m = (1 - b1) * g;          // first moment at t=1
                double v = (1 - b2) * g * g;      // second moment at t=1
                double mhat = m / (1 - b1);
                double vhat = v / (1 - b2);
                w[i] = t->v[i] - lr * mhat / (std::sqrt(vhat) + eps);
            }
            want[t->name] = std::move(w);
        }
        AdamState state;
        state.init(model.all_params());
        outer_update(model, query, nullptr, state, lr);
        for (Tensor* t : model.all_params()) {
            INFO(t->name);
            for (std::size_t i = 0; i < t->v.size(); ++i)
                REQUIRE(t->v[i] == Catch::Approx(want[t->name][i]).margin(1e-12));
        }
    }
}

TEST_CASE("meta training obeys the episode contracts") {
    RunConfig cfg = tiny_config(Method::drill_c);
    cfg.n0_reduction = 400;  // sizes 400, 200 -> 75 batches
    cfg.data.synth.samples_per_class = 220;
    cfg.verify_contracts = true;
    DataBundle data = prepare_data(cfg);
    TrainResult result = train(cfg, data);

    SECTION("replay episodes are exactly the multiples of R_F") {
        ReplaySchedule sched{cfg.replay_interval, cfg.replay_ratio, cfg.batch_size,
                             cfg.episode_len};
        std::size_t rf = sched.frequency();
        REQUIRE(rf == 3);
        for (const auto& rec : result.log.episodes) {
            if (rec.kind == 'r') {
                REQUIRE(rec.index % rf == 0);
            } else {
                // a stream episode at a replay index means memory was empty
                if (rec.index % rf == 0) REQUIRE(rec.memory_size == 0);
            }
        }
        std::size_t replays = 0;
        for (const auto& rec : result.log.episodes) replays += rec.kind == 'r';
        REQUIRE(replays > 0);
        REQUIRE(result.replay_samples == replays * sched.draw_count());
    }
    SECTION("sample accounting is exact") {
        REQUIRE(result.stream_samples == 600);
        std::size_t trained = result.stream_samples + result.replay_samples;
        REQUIRE(trained > result.stream_samples);
    }
    SECTION("outer updates equal episodes with a non-empty query") {
        std::size_t with_query = 0;
        for (const auto& rec : result.log.episodes) with_query += !std::isnan(rec.query_loss);
        REQUIRE(result.outer_updates == with_query);
        REQUIRE(result.episodes == result.log.episodes.size());
    }
    SECTION("contract verification ran and the outer loop moved phi") {
        REQUIRE(result.phi_changed_by_outer);
    }
    SECTION("semantic memory grew during training") {
        REQUIRE(result.semantic.has_value());
        REQUIRE(result.semantic->node_count() >= 2);
        REQUIRE(result.semantic->signals_observed() ==
                static_cast<std::int64_t>(result.stream_samples + result.replay_samples));
    }
}

TEST_CASE("evaluation protocol") {
    RunConfig cfg = tiny_config(Method::drill_c);
    DataBundle data = prepare_data(cfg);
    TrainResult result = train(cfg, data);

    SECTION("clone isolation: trained state is untouched") {
        std::uint64_t model_cs = result.model.checksum();
        std::uint64_t mem_cs = result.memory.checksum();
        std::uint64_t soinn_cs = result.semantic->checksum();
        EvalResult ev = evaluate(cfg, result, data);
        REQUIRE(result.model.checksum() == model_cs);
        REQUIRE(result.memory.checksum() == mem_cs);
        REQUIRE(result.semantic->checksum() == soinn_cs);
        REQUIRE(ev.episode_f1.size() == cfg.eval.episodes);
        REQUIRE_FALSE(ev.zero_shot);
        REQUIRE(ev.per_dataset_f1.size() == 2);
    }
    SECTION("per-episode scores average into the overall score") {
        EvalResult ev = evaluate(cfg, result, data);
        double mean = 0;
        for (double f : ev.episode_f1) mean += f;
        mean /= ev.episode_f1.size();
        REQUIRE(ev.overall_f1 == Catch::Approx(mean).epsilon(1e-12));
    }
    SECTION("empty memory degrades to zero-shot evaluation") {
        RunConfig zs = cfg;
        zs.p_max = 1e-12;
        DataBundle d2 = prepare_data(zs);
        TrainResult r2 = train(zs, d2);
        REQUIRE(r2.memory.empty());
        EvalResult ev = evaluate(zs, r2, d2);
        REQUIRE(ev.zero_shot);
        // identical episodes: mean equals the single-episode score
        for (double f : ev.episode_f1)
            REQUIRE(f == Catch::Approx(ev.episode_f1[0]).epsilon(1e-12));
    }
    SECTION("baselines evaluate by direct prediction") {
        RunConfig sc = tiny_config(Method::seq);
        DataBundle d2 = prepare_data(sc);
        TrainResult r2 = train(sc, d2);
        EvalResult ev = evaluate(sc, r2, d2);
        REQUIRE(ev.episode_f1.size() == 1);
    }
    SECTION("empty test sets rejected") {
        DataBundle empty = data;
        empty.test.clear();
        REQUIRE_THROWS(evaluate(cfg, result, empty));
    }
}

TEST_CASE("sequential baseline forgets the first task") {
    RunConfig cfg = tiny_config(Method::seq);
    cfg.data.synth.num_tasks = 3;
    cfg.data.synth.samples_per_class = 170;
    cfg.n0_reduction = 300;  // sizes 300, 150, 75
    cfg.baseline_lr = 0.02;
    DataBundle data = prepare_data(cfg);
    TrainResult result = train(cfg, data);
    REQUIRE(result.log.probes.size() == 3);
    const std::string first_task = data.ordering[0];
    double after_first = result.log.probes[0].per_dataset_f1.at(first_task);
    double at_end = result.log.probes[2].per_dataset_f1.at(first_task);
    INFO("after first task: " << after_first << ", at end: " << at_end);
    REQUIRE(after_first > at_end);
    // and the model did learn the first task before moving on
    REQUIRE(after_first > 0.6);
}

TEST_CASE("baseline method accounting") {
    SECTION("seq consumes each stream sample exactly once") {
        RunConfig cfg = tiny_config(Method::seq);
        DataBundle data = prepare_data(cfg);
        TrainResult result = train(cfg, data);
        REQUIRE(result.stream_samples == 150);
        REQUIRE(result.replay_samples == 0);
        REQUIRE(result.memory.empty());
    }
    SECTION("replay adds rehearsal draws on the episode grid") {
        RunConfig cfg = tiny_config(Method::replay);
        cfg.n0_reduction = 400;
        cfg.data.synth.samples_per_class = 220;
        DataBundle data = prepare_data(cfg);
        TrainResult result = train(cfg, data);
        REQUIRE(result.stream_samples == 600);
        ReplaySchedule sched{cfg.replay_interval, cfg.replay_ratio, cfg.batch_size,
                             cfg.episode_len};
        std::size_t grid = sched.frequency() * cfg.episode_len;  // batches
        std::size_t expected_events = (600 / cfg.batch_size) / grid;
        REQUIRE(result.replay_samples == expected_events * sched.draw_count());
        std::size_t replay_records = 0;
        for (const auto& rec : result.log.episodes) replay_records += rec.kind == 'r';
        REQUIRE(replay_records == expected_events);
    }
    SECTION("mtl sees the union for two epochs") {
        RunConfig cfg = tiny_config(Method::mtl);
        DataBundle data = prepare_data(cfg);
        TrainResult result = train(cfg, data);
        REQUIRE(result.stream_samples == 150);
        // 19 batches per epoch, two epochs
        REQUIRE(result.episodes == 2 * ((150 + 7) / 8));
    }
}

TEST_CASE("training is deterministic and results files reproduce") {
    RunConfig cfg = tiny_config(Method::drill_m, 43);
    std::string dir_a = temp_dir("a"), dir_b = temp_dir("b");
    RunOutcome a = execute_run(cfg, dir_a);
    RunOutcome b = execute_run(cfg, dir_b);
    REQUIRE(a.ok);
    REQUIRE(b.ok);
    REQUIRE(a.f1_overall == b.f1_overall);
    REQUIRE(results_equal_ignoring_wallclock(a.results_path, b.results_path));
    REQUIRE(slurp(a.log_path) == slurp(b.log_path));

    SECTION("different seeds give different runs") {
        RunConfig other = tiny_config(Method::drill_m, 44);
        RunOutcome c = execute_run(other, dir_a);
        REQUIRE(c.ok);
        REQUIRE(c.f1_overall != a.f1_overall);
    }
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("file-mode pipeline loads the benchmark layout") {
    // benchmark-shaped synthetic CSVs: five datasets, 33 global classes,
    // sentiment block shared between yelp and amazon
    std::string dir = temp_dir("files");
    SyntheticConfig sc;
    sc.samples_per_class = 30;
    sc.test_per_class = 4;
    sc.vocab = 200;
    sc.seed = 9;
    auto rows = synth_benchmark_rows(sc);
    REQUIRE(rows.size() == 5);
    for (const auto& [ds, pair] : rows) {
        std::ofstream tr(dir + "/" + ds + ".train.csv");
        write_corpus_csv(tr, pair.first);
        std::ofstream te(dir + "/" + ds + ".test.csv");
        write_corpus_csv(te, pair.second);
    }

    RunConfig cfg = tiny_config(Method::seq);
    cfg.data.kind = DataSource::Kind::files;
    cfg.data.dir = dir;
    cfg.n0_reduction = 64;  // sizes 64/32/16/8/4 fit the 30-per-class corpora
    DataBundle data = prepare_data(cfg);
    REQUIRE(data.label_map.num_classes() == 33);
    REQUIRE(data.ordering == ordering_for(cfg.order));
    REQUIRE(data.train.at("yahoo").size() == 300);
    REQUIRE(data.test.at("agnews").size() == 16);
    for (const auto& [ds, corpus] : data.train)
        for (const auto& s : corpus) {
            const auto& blk = data.label_map.block(ds);
            REQUIRE(s.global_label >= blk.offset);
            REQUIRE(s.global_label < blk.offset + blk.count);
        }
    // merged sentiment block shares global labels across yelp and amazon
    REQUIRE(data.label_map.block("yelp").offset == data.label_map.block("amazon").offset);

    SECTION("a short run trains and evaluates end to end") {
        TrainResult result = train(cfg, data);
        REQUIRE(result.stream_samples == 64 + 32 + 16 + 8 + 4);
        EvalResult ev = evaluate(cfg, result, data);
        REQUIRE(ev.per_dataset_f1.size() == 5);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("model checkpoints round trip") {
    RunConfig cfg = tiny_config(Method::drill_c);
    DataBundle data = prepare_data(cfg);
    TrainResult result = train(cfg, data);

    std::ostringstream out;
    save_checkpoint(out, result.model, &*result.semantic, config_to_json(cfg));

    DrillModel fresh(cfg.rln, data.label_map.num_classes(), Variant::drill_c, 999);
    std::istringstream in(out.str());
    auto [net, echo] = load_checkpoint(in, fresh);
    REQUIRE(net.has_value());
    REQUIRE(net->checksum() == result.semantic->checksum());
    REQUIRE(fresh.checksum() == result.model.checksum());
    REQUIRE(echo["method"] == "drill_c");
    // restored model predicts identically
    for (const auto& s : data.test.at("task0"))
        REQUIRE(fresh.predict(s, &*net) == result.model.predict(s, &*result.semantic));

    SECTION("checkpoint without a semantic memory") {
        RunConfig sc = tiny_config(Method::seq);
        DataBundle d2 = prepare_data(sc);
        TrainResult r2 = train(sc, d2);
        std::ostringstream out2;
        save_checkpoint(out2, r2.model, nullptr, config_to_json(sc));
        DrillModel f2(sc.rln, d2.label_map.num_classes(), Variant::ungated, 1);
        std::istringstream in2(out2.str());
        auto [net2, echo2] = load_checkpoint(in2, f2);
        REQUIRE_FALSE(net2.has_value());
        REQUIRE(f2.checksum() == r2.model.checksum());
    }
}

TEST_CASE("config validation") {
    RunConfig cfg = tiny_config(Method::seq);
    SECTION("multi-epoch stream training rejected") {
        cfg.epochs = 2;
        REQUIRE_THROWS(cfg.validate());
    }
    SECTION("bad rates rejected") {
        cfg.inner_lr = 0;
        REQUIRE_THROWS(cfg.validate());
    }
    SECTION("odd width rejected for the concatenation variant") {
        RunConfig c2 = tiny_config(Method::drill_c);
        c2.rln.repr_width = 15;
        REQUIRE_THROWS(c2.validate());
    }
}

TEST_CASE("tiny matrix smoke run") {
    RunConfig base = tiny_config(Method::seq);
    ExperimentMatrix matrix;
    matrix.base = base;
    matrix.methods = {Method::seq, Method::drill_c};
    matrix.orders = {'1'};
    matrix.strategies = {Strategy::reduction};
    matrix.seeds = {42};
    std::string dir = temp_dir("matrix");
    MatrixResults results = run_matrix(matrix, dir, 2);
    REQUIRE(results.all_ok());
    REQUIRE(results.runs.size() == 2);
    write_matrix_outputs(results, dir);
    REQUIRE(std::filesystem::exists(dir + "/results.csv"));
    REQUIRE(std::filesystem::exists(dir + "/aggregate.csv"));
    REQUIRE(std::filesystem::exists(dir + "/seq_I_R_42.json"));

    SECTION("rerun reproduces the results file") {
        std::string dir2 = temp_dir("matrix2");
        MatrixResults again = run_matrix(matrix, dir2, 1);
        REQUIRE(again.all_ok());
        REQUIRE(results_equal_ignoring_wallclock(dir + "/seq_I_R_42.json",
                                                 dir2 + "/seq_I_R_42.json"));
        std::filesystem::remove_all(dir2);
    }
    std::filesystem::remove_all(dir);
}
