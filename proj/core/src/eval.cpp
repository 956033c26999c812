#include "kdlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace kdlab {

int argmax_row(std::span<const double> row) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(row.size()); ++j)
        if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)]) best = j;
    return best;
}

std::vector<int> predictions(const Tensor& probs) {
    if (probs.rank() != 2) throw ShapeError("predictions: probs must be rank 2");
    const int n = probs.extent(0), c = probs.extent(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] =
            argmax_row(std::span<const double>(probs.data.data() + static_cast<std::size_t>(i) * c,
                                               static_cast<std::size_t>(c)));
    return out;
}

double accuracy(const Tensor& probs, std::span<const int> labels) {
    if (probs.rank() != 2 || probs.extent(0) != static_cast<int>(labels.size()))
        throw ShapeError("accuracy: probs/labels size mismatch");
    if (labels.empty()) throw ValueError("accuracy: empty input");
    const auto preds = predictions(probs);
    int correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (preds[i] == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double roc_auc_binary(std::span<const double> scores, std::span<const bool> labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc_auc_binary: scores/labels size mismatch");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (bool l : labels) pos += l ? 1 : 0;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw ValueError("roc_auc_binary: need at least one positive and one negative");

    // Average ranks with ties, then the rank-sum form of the statistic.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    const double p = static_cast<double>(pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double roc_auc_multiclass(const Tensor& probs, std::span<const int> labels) {
    if (probs.rank() != 2 || probs.extent(0) != static_cast<int>(labels.size()))
        throw ShapeError("roc_auc_multiclass: probs/labels size mismatch");
    const int n = probs.extent(0), c = probs.extent(1);
    std::vector<int> counts(static_cast<std::size_t>(c), 0);
    for (int l : labels) {
        if (l < 0 || l >= c) throw ValueError("roc_auc_multiclass: label out of range");
        ++counts[static_cast<std::size_t>(l)];
    }
    for (int cls = 0; cls < c; ++cls)
        if (counts[static_cast<std::size_t>(cls)] == 0)
            throw ValueError("roc_auc_multiclass: class " + std::to_string(cls) + " has no samples");
    double total = 0.0;
    for (int cls = 0; cls < c; ++cls) {
        std::vector<double> scores(static_cast<std::size_t>(n));
        std::unique_ptr<bool[]> bin(new bool[static_cast<std::size_t>(n)]);
        for (int row = 0; row < n; ++row) {
            scores[static_cast<std::size_t>(row)] = probs.data[static_cast<std::size_t>(row) * c + cls];
            bin[static_cast<std::size_t>(row)] = labels[static_cast<std::size_t>(row)] == cls;
        }
        total += roc_auc_binary(scores, std::span<const bool>(bin.get(), static_cast<std::size_t>(n)));
    }
    return total / static_cast<double>(c);
}

MetricReport evaluate(const Tensor& probs, std::span<const int> labels, std::optional<int> fold_id) {
    const int c = probs.extent(1);
    MetricReport r;
    r.fold_id = fold_id;
    r.accuracy = accuracy(probs, labels);
    r.confusion.assign(static_cast<std::size_t>(c), std::vector<int>(static_cast<std::size_t>(c), 0));
    const auto preds = predictions(probs);
    for (std::size_t i = 0; i < labels.size(); ++i)
        ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
    for (int cls = 0; cls < c; ++cls) {
        const int n = probs.extent(0);
        std::vector<double> scores(static_cast<std::size_t>(n));
        std::unique_ptr<bool[]> bin(new bool[static_cast<std::size_t>(n)]);
        bool any_pos = false, any_neg = false;
        for (int row = 0; row < n; ++row) {
            scores[static_cast<std::size_t>(row)] = probs.data[static_cast<std::size_t>(row) * c + cls];
            bin[static_cast<std::size_t>(row)] = labels[static_cast<std::size_t>(row)] == cls;
            (bin[static_cast<std::size_t>(row)] ? any_pos : any_neg) = true;
        }
        if (any_pos && any_neg)
            r.per_class_auc.push_back(roc_auc_binary(scores, std::span<const bool>(bin.get(), static_cast<std::size_t>(n))));
    }
    if (r.per_class_auc.empty()) throw ValueError("evaluate: no class admits a binary AUC");
    r.auc = std::accumulate(r.per_class_auc.begin(), r.per_class_auc.end(), 0.0) /
            static_cast<double>(r.per_class_auc.size());
    return r;
}

CvSummary summarize(std::vector<MetricReport> folds) {
    CvSummary s;
    s.folds = std::move(folds);
    const double n = static_cast<double>(s.folds.size());
    for (const auto& f : s.folds) {
        s.mean_accuracy += f.accuracy;
        s.mean_auc += f.auc;
    }
    s.mean_accuracy /= n;
    s.mean_auc /= n;
    for (const auto& f : s.folds) {
        s.stddev_accuracy += (f.accuracy - s.mean_accuracy) * (f.accuracy - s.mean_accuracy);
        s.stddev_auc += (f.auc - s.mean_auc) * (f.auc - s.mean_auc);
    }
    s.stddev_accuracy = std::sqrt(s.stddev_accuracy / n);
    s.stddev_auc = std::sqrt(s.stddev_auc / n);
    return s;
}

CvSummary cross_validate(const std::function<MetricReport(int fold)>& run, const FoldPlan& plan) {
    if (plan.k < 2) throw ValueError("cross_validate: invalid fold plan");
    std::vector<MetricReport> folds;
    folds.reserve(static_cast<std::size_t>(plan.k));
    for (int f = 0; f < plan.k; ++f) {
        MetricReport r = run(f);
        r.fold_id = f;
        folds.push_back(std::move(r));
    }
    return summarize(std::move(folds));
}

}  // namespace kdlab
