#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "drill/experiment.hpp"
#include "drill/metrics.hpp"

using namespace drill;

namespace {

// independent confusion-matrix oracle for macro-F1
double oracle_macro_f1(const std::vector<int>& pred, const std::vector<int>& gold, int C) {
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
        int tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (pred[i] == c && gold[i] == c) ++tp;
            if (pred[i] == c && gold[i] != c) ++fp;
            if (pred[i] != c && gold[i] == c) ++fn;
        }
        double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
        double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
        sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    }
    return sum / C;
}

}  // namespace

TEST_CASE("macro F1") {
    SECTION("perfect predictions over all classes score 1") {
        std::vector<int> gold{0, 1, 2, 0, 1, 2};
        REQUIRE(macro_f1(gold, gold, 3) == 1.0);
    }
    SECTION("constant wrong predictions score 0 for present classes") {
        std::vector<int> gold{0, 0, 1, 1};
        std::vector<int> pred{2, 2, 2, 2};
        REQUIRE(macro_f1(pred, gold, 3) == 0.0);
    }
    SECTION("3-class fixture matches the hand oracle") {
        std::vector<int> gold{0, 0, 1, 2};
        std::vector<int> pred{0, 1, 1, 2};
        // class 0: precision 1, recall 1/2 -> 2/3
        // class 1: precision 1/2, recall 1 -> 2/3
        // class 2: 1
        double want = (2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0;
        double got = macro_f1(pred, gold, 3);
        REQUIRE(std::fabs(got - want) < 1e-12);
        REQUIRE(std::fabs(got - oracle_macro_f1(pred, gold, 3)) < 1e-12);
    }
    SECTION("classes absent from gold and predictions contribute zero") {
        std::vector<int> gold{0, 1};
        std::vector<int> pred{0, 1};
        REQUIRE(macro_f1(pred, gold, 4) == Catch::Approx(0.5).epsilon(1e-12));
    }
    SECTION("permutation invariance") {
        std::mt19937_64 rng(7);
        std::vector<int> gold, pred;
        for (int i = 0; i < 60; ++i) {
            gold.push_back(static_cast<int>(rng() % 5));
            pred.push_back(static_cast<int>(rng() % 5));
        }
        double base = macro_f1(pred, gold, 5);
        std::vector<std::size_t> idx(gold.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<int> g2, p2;
        for (auto i : idx) {
            g2.push_back(gold[i]);
            p2.push_back(pred[i]);
        }
        REQUIRE(macro_f1(p2, g2, 5) == Catch::Approx(base).epsilon(1e-12));
        REQUIRE(std::fabs(base - oracle_macro_f1(pred, gold, 5)) < 1e-12);
    }
    SECTION("empty input rejected") {
        REQUIRE_THROWS(macro_f1({}, {}, 3));
    }
    SECTION("block-restricted macro F1") {
        ConfusionMatrix cm(4);
        cm.add(2, 2);
        cm.add(2, 3);
        cm.add(3, 3);
        // block [2,4): class 2 -> p=1, r=1/2, f1=2/3; class 3 -> p=1/2, r=1, f1=2/3
        REQUIRE(cm.macro_f1_block(2, 2) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
    }
}

namespace {

RunOutcome fake_outcome(Method m, char order, Strategy st, std::uint64_t seed, double f1) {
    RunOutcome r;
    r.config.method = m;
    r.config.order = order;
    r.config.strategy = st;
    r.config.seed = seed;
    r.ok = true;
    r.f1_overall = f1;
    r.f1_per_dataset["task0"] = f1;
    return r;
}

}  // namespace

TEST_CASE("aggregation") {
    SECTION("identical cells give zero sigma") {
        MatrixResults res;
        for (char o : {'1', '2', '3', '4'})
            for (Strategy st : {Strategy::expansion, Strategy::reduction})
                for (std::uint64_t seed : {42u, 43u, 44u})
                    res.runs.push_back(fake_outcome(Method::seq, o, st, seed, 0.5));
        auto rows = aggregate(res);
        REQUIRE(rows.size() == 1);
        REQUIRE(rows[0].cells.size() == 8);
        REQUIRE(*rows[0].mu == Catch::Approx(0.5).epsilon(1e-12));
        REQUIRE(*rows[0].sigma == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("two cells {60, 40} average to 50") {
        MatrixResults res;
        res.runs.push_back(fake_outcome(Method::seq, '1', Strategy::expansion, 42, 0.60));
        res.runs.push_back(fake_outcome(Method::seq, '2', Strategy::expansion, 42, 0.40));
        auto rows = aggregate(res);
        REQUIRE(*rows[0].mu == Catch::Approx(0.50).epsilon(1e-12));
    }
    SECTION("seeds average before the cell statistics") {
        MatrixResults res;
        res.runs.push_back(fake_outcome(Method::seq, '1', Strategy::expansion, 42, 0.6));
        res.runs.push_back(fake_outcome(Method::seq, '1', Strategy::expansion, 43, 0.4));
        res.runs.push_back(fake_outcome(Method::seq, '2', Strategy::expansion, 42, 0.2));
        auto rows = aggregate(res);
        REQUIRE(rows[0].cells.at("E-I") == Catch::Approx(0.5).epsilon(1e-12));
        REQUIRE(rows[0].cells.at("E-II") == Catch::Approx(0.2).epsilon(1e-12));
        REQUIRE(*rows[0].mu == Catch::Approx(0.35).epsilon(1e-12));
    }
    SECTION("population sigma against a hand computation") {
        // cells {1..8}/10: mu = 0.45, var = 0.0525 -> sigma = sqrt(0.0525)
        MatrixResults res;
        int v = 0;
        for (Strategy st : {Strategy::expansion, Strategy::reduction})
            for (char o : {'1', '2', '3', '4'})
                res.runs.push_back(
                    fake_outcome(Method::mtl, o, st, 42, static_cast<double>(++v) / 10.0));
        auto rows = aggregate(res);
        REQUIRE(*rows[0].mu == Catch::Approx(0.45).epsilon(1e-12));
        REQUIRE(*rows[0].sigma == Catch::Approx(std::sqrt(0.0525)).epsilon(1e-12));
    }
    SECTION("failed cells leave explicit gaps") {
        MatrixResults res;
        res.runs.push_back(fake_outcome(Method::seq, '1', Strategy::expansion, 42, 0.6));
        RunOutcome bad = fake_outcome(Method::seq, '2', Strategy::expansion, 42, 0.0);
        bad.ok = false;
        res.runs.push_back(bad);
        auto rows = aggregate(res);
        REQUIRE(rows[0].cells.count("E-I") == 1);
        REQUIRE(rows[0].cells.count("E-II") == 0);
        std::string table = render_aggregate_table(rows, aggregate_columns(res));
        REQUIRE(table.find("--") != std::string::npos);
        REQUIRE_FALSE(res.all_ok());
    }
    SECTION("csv output carries one row per run") {
        MatrixResults res;
        res.runs.push_back(fake_outcome(Method::seq, '1', Strategy::reduction, 42, 0.61));
        std::ostringstream csv;
        write_results_csv(csv, res);
        REQUIRE(csv.str().find("method,order,strategy,seed,f1_overall,f1_task0,episodes,") !=
                std::string::npos);
        REQUIRE(csv.str().find("seq,I,R,42,") != std::string::npos);
    }
}
