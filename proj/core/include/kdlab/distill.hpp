#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdlab/data.hpp"
#include "kdlab/models.hpp"
#include "kdlab/tensor.hpp"

namespace kdlab {

// Frozen teacher class probabilities, computed once per stage and reused
// across every student epoch.
struct SoftLabelSet {
    int num_classes = 0;
    int count = 0;
    std::vector<double> probs;  // count x num_classes, row-major
    std::vector<int> argmax;    // lowest index on exact ties
    std::uint64_t teacher_checksum = 0;

    std::span<const double> row(int i) const {
        return {probs.data() + static_cast<std::size_t>(i) * num_classes, static_cast<std::size_t>(num_classes)};
    }
};

struct StageConfig {
    int epochs = 0;
    int batch_size = 16;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::optional<double> stop_accuracy;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class LossKind { Hard, Unlabeled, Conditional };

struct EpochStat {
    int epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
};

struct StageResult {
    Parameters params;
    std::vector<EpochStat> history;
};

struct StageHistory {
    std::string stage;  // "ul", "kd", "hard", "pretrain", "finetune"
    std::vector<EpochStat> history;
};

SoftLabelSet compute_soft_labels(const ModelSpec& teacher_spec, const Parameters& teacher_params,
                                 std::span<const ImageSample> samples);

// The three losses, differentiable w.r.t. the student probability tensor.
// student_probs rows [row_offset, row_offset + batch) pair with soft-label /
// label entries starting at the same offset.

// -(1/M) sum_i sum_j pT[i,j] ln pS[i,j]
Tensor loss_unlabeled(Tape& tape, const Tensor& student_probs, const SoftLabelSet& soft, int row_offset = 0);

// Soft cross-entropy where the teacher's argmax matches the label, hard
// cross-entropy where it does not. The branch is decided by the frozen
// soft labels, never by the student.
Tensor loss_conditional(Tape& tape, const Tensor& student_probs, const SoftLabelSet& soft,
                        std::span<const int> labels, int row_offset = 0);

// -(1/N) sum_i ln pS[i, label_i]
Tensor loss_hard(Tape& tape, const Tensor& student_probs, std::span<const int> labels);

// Minibatch SGD with momentum; deterministic per-epoch shuffling derived
// from cfg.seed. Stops early once training accuracy reaches
// cfg.stop_accuracy (argmax agreement with the teacher for the unlabeled
// loss). The input Parameters are untouched.
StageResult train_stage(const ModelSpec& spec, const Parameters& start, std::span<const ImageSample> data,
                        LossKind kind, const SoftLabelSet* soft, const StageConfig& cfg);

struct TeacherResult {
    Parameters params;
    std::vector<StageHistory> stages;
};

// Hard-label pretraining on the source set, then classifier-head
// replacement and hard-label fine-tuning on the target set. An empty
// source set skips the pretraining phase.
TeacherResult train_teacher(const LabeledSet& source, std::span<const ImageSample> target, int target_classes,
                            const ModelSpec& spec, const StageConfig& cfg_pretrain, const StageConfig& cfg_finetune);

struct StudentStages {
    bool stage1_ul = false;
    bool stage2_kd = false;
    bool stage3_hard = true;
};

struct StudentResult {
    Parameters params;
    std::vector<StageHistory> stages;
};

StudentResult train_student(const ModelSpec& student_spec, const ModelSpec& teacher_spec,
                            const Parameters& teacher_params, std::span<const ImageSample> unlabeled,
                            std::span<const ImageSample> labeled, const StageConfig& cfg1, const StageConfig& cfg2,
                            const StageConfig& cfg3, const StudentStages& enable);

// Target-class copy of a spec: same body, classifier head resized.
ModelSpec with_num_classes(const ModelSpec& spec, int num_classes);

}  // namespace kdlab
