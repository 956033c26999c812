#include <doctest.h>

#include <cmath>

#include "kdlab/eval.hpp"
#include "kdlab/rng.hpp"
#include "oracles.hpp"

using namespace kdlab;

TEST_CASE("accuracy") {
    SUBCASE("counting") {
        const Tensor probs({4, 2}, {0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6});
        const std::vector<int> labels{0, 1, 0, 0};
        CHECK(accuracy(probs, labels) == doctest::Approx(0.75));
    }
    SUBCASE("extremes") {
        const Tensor probs({2, 2}, {1.0, 0.0, 0.0, 1.0});
        CHECK(accuracy(probs, std::vector<int>{0, 1}) == 1.0);
        CHECK(accuracy(probs, std::vector<int>{1, 0}) == 0.0);
    }
    SUBCASE("empty rejected") {
        CHECK_THROWS_AS(accuracy(Tensor({1, 2}, {0.5, 0.5}), std::vector<int>{}), ShapeError);
    }
    SUBCASE("ties resolve to the lowest index") {
        const Tensor probs({1, 3}, {0.4, 0.4, 0.2});
        CHECK(predictions(probs) == std::vector<int>{0});
    }
}

TEST_CASE("binary AUC basics") {
    const std::vector<double> perfect{0.9, 0.8, 0.3, 0.2};
    const bool labels_arr[] = {true, true, false, false};
    CHECK(roc_auc_binary(perfect, std::span<const bool>(labels_arr, 4)) == doctest::Approx(1.0));

    const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
    CHECK(roc_auc_binary(flat, std::span<const bool>(labels_arr, 4)) == doctest::Approx(0.5));

    const std::vector<double> mixed{0.9, 0.6, 0.4, 0.3};
    const bool mixed_labels[] = {true, false, true, false};
    CHECK(roc_auc_binary(mixed, std::span<const bool>(mixed_labels, 4)) == doctest::Approx(0.75));

    const bool single[] = {true, true};
    CHECK_THROWS_AS(roc_auc_binary(std::vector<double>{0.1, 0.2}, std::span<const bool>(single, 2)), ValueError);
}

TEST_CASE("binary AUC equals brute-force pair counting") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(199));
        std::vector<double> scores(static_cast<std::size_t>(n));
        std::vector<bool> labels_v(static_cast<std::size_t>(n));
        bool any_pos = false, any_neg = false;
        for (int i = 0; i < n; ++i) {
            // Quantized scores force ties.
            scores[static_cast<std::size_t>(i)] = static_cast<double>(rng.uniform_int(12)) / 12.0;
            labels_v[static_cast<std::size_t>(i)] = rng.uniform() < 0.5;
        }
        std::unique_ptr<bool[]> labels(new bool[static_cast<std::size_t>(n)]);
        for (int i = 0; i < n; ++i) {
            labels[static_cast<std::size_t>(i)] = labels_v[static_cast<std::size_t>(i)];
            (labels_v[static_cast<std::size_t>(i)] ? any_pos : any_neg) = true;
        }
        if (!any_pos || !any_neg) continue;
        const std::span<const bool> lspan(labels.get(), static_cast<std::size_t>(n));
        CHECK(roc_auc_binary(scores, lspan) == doctest::Approx(oracle::auc_pair_counting(scores, lspan)).epsilon(1e-12));
    }
}

TEST_CASE("binary AUC invariances") {
    Rng rng(43);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 4 + static_cast<int>(rng.uniform_int(60));
        std::vector<double> scores(static_cast<std::size_t>(n));
        std::unique_ptr<bool[]> labels(new bool[static_cast<std::size_t>(n)]);
        for (int i = 0; i < n; ++i) {
            scores[static_cast<std::size_t>(i)] = rng.uniform(-3.0, 3.0);  // continuous: ties have measure zero
            labels[static_cast<std::size_t>(i)] = i % 2 == 0;
        }
        const std::span<const bool> lspan(labels.get(), static_cast<std::size_t>(n));
        const double base = roc_auc_binary(scores, lspan);

        std::vector<double> transformed(scores);
        for (double& s : transformed) s = std::exp(0.5 * s) + 2.0;  // strictly increasing
        CHECK(roc_auc_binary(transformed, lspan) == doctest::Approx(base).epsilon(1e-12));

        std::vector<double> negated(scores);
        for (double& s : negated) s = -s;
        CHECK(roc_auc_binary(negated, lspan) == doctest::Approx(1.0 - base).epsilon(1e-12));
    }
}

TEST_CASE("multiclass AUC") {
    SUBCASE("two classes reduce to binary") {
        Rng rng(47);
        const int n = 30;
        Tensor probs = Tensor::zeros({n, 2});
        std::vector<int> labels(static_cast<std::size_t>(n));
        std::unique_ptr<bool[]> bin(new bool[static_cast<std::size_t>(n)]);
        std::vector<double> pos_scores(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double p = rng.uniform(0.05, 0.95);
            probs.data[static_cast<std::size_t>(i) * 2] = 1.0 - p;
            probs.data[static_cast<std::size_t>(i) * 2 + 1] = p;
            labels[static_cast<std::size_t>(i)] = i % 2;
            bin[static_cast<std::size_t>(i)] = i % 2 == 1;
            pos_scores[static_cast<std::size_t>(i)] = p;
        }
        const double binary =
            roc_auc_binary(pos_scores, std::span<const bool>(bin.get(), static_cast<std::size_t>(n)));
        // Class-0 AUC on column 0 mirrors class-1 AUC exactly, so the macro
        // average equals the binary AUC.
        CHECK(roc_auc_multiclass(probs, labels) == doctest::Approx(binary).epsilon(1e-12));
    }
    SUBCASE("perfect separation") {
        Tensor probs = Tensor::zeros({6, 3});
        std::vector<int> labels{0, 0, 1, 1, 2, 2};
        for (int i = 0; i < 6; ++i) probs.data[static_cast<std::size_t>(i) * 3 + labels[static_cast<std::size_t>(i)]] = 1.0;
        CHECK(roc_auc_multiclass(probs, labels) == doctest::Approx(1.0));
    }
    SUBCASE("matches trapezoid oracle per class") {
        Rng rng(53);
        for (int trial = 0; trial < 25; ++trial) {
            const int n = 9 + static_cast<int>(rng.uniform_int(40));
            const int c = 3;
            Tensor probs = Tensor::zeros({n, c});
            std::vector<int> labels(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                labels[static_cast<std::size_t>(i)] = i % c;
                double sum = 0.0;
                for (int j = 0; j < c; ++j) {
                    const double v = rng.uniform(0.05, 1.0);
                    probs.data[static_cast<std::size_t>(i * c + j)] = v;
                    sum += v;
                }
                for (int j = 0; j < c; ++j) probs.data[static_cast<std::size_t>(i * c + j)] /= sum;
            }
            double macro = 0.0;
            for (int cls = 0; cls < c; ++cls) {
                std::vector<double> scores(static_cast<std::size_t>(n));
                std::unique_ptr<bool[]> bin(new bool[static_cast<std::size_t>(n)]);
                for (int i = 0; i < n; ++i) {
                    scores[static_cast<std::size_t>(i)] = probs.data[static_cast<std::size_t>(i * c + cls)];
                    bin[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == cls;
                }
                macro += oracle::auc_trapezoid(scores, std::span<const bool>(bin.get(), static_cast<std::size_t>(n)));
            }
            macro /= c;
            CHECK(roc_auc_multiclass(probs, labels) == doctest::Approx(macro).epsilon(1e-9));
        }
    }
    SUBCASE("missing class rejected") {
        const Tensor probs({2, 3}, {0.5, 0.3, 0.2, 0.2, 0.5, 0.3});
        CHECK_THROWS_AS(roc_auc_multiclass(probs, std::vector<int>{0, 1}), ValueError);
    }
}

TEST_CASE("evaluate and confusion") {
    const Tensor probs({4, 2}, {0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6});
    const std::vector<int> labels{0, 1, 1, 0};
    const auto report = evaluate(probs, labels);
    CHECK(report.accuracy == doctest::Approx(0.5));
    int trace = 0, total = 0;
    for (std::size_t i = 0; i < report.confusion.size(); ++i)
        for (std::size_t j = 0; j < report.confusion[i].size(); ++j) {
            total += report.confusion[i][j];
            if (i == j) trace += report.confusion[i][j];
        }
    CHECK(total == 4);
    CHECK(static_cast<double>(trace) / total == doctest::Approx(report.accuracy));
    // Row sums equal per-class sample counts.
    CHECK(report.confusion[0][0] + report.confusion[0][1] == 2);
    CHECK(report.confusion[1][0] + report.confusion[1][1] == 2);
}

TEST_CASE("cross-validation aggregation") {
    const auto plan = kfold(20, 4, 3);
    int calls = 0;
    const auto summary = cross_validate(
        [&calls](int fold) {
            ++calls;
            MetricReport r;
            r.accuracy = 0.5 + 0.1 * fold;
            r.auc = 0.8;
            return r;
        },
        plan);
    CHECK(calls == 4);
    REQUIRE(summary.folds.size() == 4);
    CHECK(summary.folds[2].fold_id == 2);
    CHECK(summary.mean_accuracy == doctest::Approx((0.5 + 0.6 + 0.7 + 0.8) / 4.0));
    CHECK(summary.mean_auc == doctest::Approx(0.8));
    CHECK(summary.stddev_auc == doctest::Approx(0.0));
}
