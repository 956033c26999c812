#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kdlab/data.hpp"
#include "kdlab/tensor.hpp"

namespace kdlab {

struct MetricReport {
    double accuracy = 0.0;
    double auc = 0.0;
    std::vector<double> per_class_auc;
    std::vector<std::vector<int>> confusion;  // [true][predicted]
    std::optional<int> fold_id;
};

struct CvSummary {
    std::vector<MetricReport> folds;
    double mean_accuracy = 0.0;
    double stddev_accuracy = 0.0;
    double mean_auc = 0.0;
    double stddev_auc = 0.0;
};

// Argmax per row, lowest index on ties.
int argmax_row(std::span<const double> row);
std::vector<int> predictions(const Tensor& probs);

double accuracy(const Tensor& probs, std::span<const int> labels);

// Exact Mann-Whitney rank statistic: P(score+ > score-) + 0.5 P(tie).
double roc_auc_binary(std::span<const double> scores, std::span<const bool> labels);

// Macro-averaged one-vs-rest AUC over the probability columns.
double roc_auc_multiclass(const Tensor& probs, std::span<const int> labels);

MetricReport evaluate(const Tensor& probs, std::span<const int> labels, std::optional<int> fold_id = {});

// Runs `run` for each fold of the plan and aggregates mean and (population)
// standard deviation of accuracy and AUC.
CvSummary cross_validate(const std::function<MetricReport(int fold)>& run, const FoldPlan& plan);

CvSummary summarize(std::vector<MetricReport> folds);

}  // namespace kdlab
