#include "kdlab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kdlab/eval.hpp"
#include "kdlab/rng.hpp"

namespace kdlab {

void StageConfig::validate() const {
    if (epochs < 0) throw ConfigError("stage: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("stage: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("stage: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("stage: momentum must be in [0,1)");
    if (stop_accuracy && (*stop_accuracy <= 0.0 || *stop_accuracy > 1.0))
        throw ConfigError("stage: stop_accuracy must be in (0,1]");
}

SoftLabelSet compute_soft_labels(const ModelSpec& teacher_spec, const Parameters& teacher_params,
                                 std::span<const ImageSample> samples) {
    if (samples.empty()) throw ValueError("compute_soft_labels: empty sample set");
    SoftLabelSet soft;
    soft.num_classes = teacher_spec.num_classes;
    soft.count = static_cast<int>(samples.size());
    soft.probs.reserve(samples.size() * static_cast<std::size_t>(soft.num_classes));
    soft.teacher_checksum = teacher_params.checksum();
    constexpr int kBatch = 32;
    for (std::size_t at = 0; at < samples.size(); at += kBatch) {
        const std::size_t n = std::min<std::size_t>(kBatch, samples.size() - at);
        const Tensor probs = forward(teacher_spec, teacher_params, to_batch(samples.subspan(at, n)));
        soft.probs.insert(soft.probs.end(), probs.data.begin(), probs.data.end());
    }
    soft.argmax.reserve(samples.size());
    for (int i = 0; i < soft.count; ++i) soft.argmax.push_back(argmax_row(soft.row(i)));
    return soft;
}

namespace {

// All three losses are the same weighted form -(1/N) sum W o ln(pS); they
// differ only in the weight matrix W.
Tensor weighted_log_loss(Tape& tape, const Tensor& student_probs, const Tensor& weights) {
    const Tensor logp = tape.log_clamped(student_probs);
    const Tensor total = tape.masked_sum(logp, weights);
    return tape.scale(total, -1.0 / static_cast<double>(student_probs.extent(0)));
}

void check_rows(const Tensor& student_probs, const SoftLabelSet& soft, int row_offset, const char* what) {
    if (student_probs.rank() != 2) throw ShapeError(std::string(what) + ": student probs must be rank 2");
    if (student_probs.extent(1) != soft.num_classes) throw ShapeError(std::string(what) + ": class count mismatch");
    if (row_offset < 0 || row_offset + student_probs.extent(0) > soft.count)
        throw ShapeError(std::string(what) + ": soft-label rows out of range");
}

}  // namespace

Tensor loss_unlabeled(Tape& tape, const Tensor& student_probs, const SoftLabelSet& soft, int row_offset) {
    if (student_probs.rank() != 2 || student_probs.extent(0) == 0)
        throw ValueError("loss_unlabeled: empty unlabeled batch");
    check_rows(student_probs, soft, row_offset, "loss_unlabeled");
    const int n = student_probs.extent(0), c = soft.num_classes;
    Tensor weights = Tensor::zeros({n, c});
    std::copy_n(soft.probs.begin() + static_cast<std::ptrdiff_t>(row_offset) * c, static_cast<std::size_t>(n) * c,
                weights.data.begin());
    return weighted_log_loss(tape, student_probs, weights);
}

Tensor loss_conditional(Tape& tape, const Tensor& student_probs, const SoftLabelSet& soft,
                        std::span<const int> labels, int row_offset) {
    if (labels.empty()) throw ValueError("loss_conditional: empty labeled batch");
    check_rows(student_probs, soft, row_offset, "loss_conditional");
    if (static_cast<int>(labels.size()) != student_probs.extent(0))
        throw ShapeError("loss_conditional: label count mismatch");
    const int n = student_probs.extent(0), c = soft.num_classes;
    Tensor weights = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= c) throw ValueError("loss_conditional: label out of range");
        const int row = row_offset + i;
        if (soft.argmax[static_cast<std::size_t>(row)] == label) {
            const auto src = soft.row(row);
            std::copy(src.begin(), src.end(), weights.data.begin() + static_cast<std::ptrdiff_t>(i) * c);
        } else {
            weights.data[static_cast<std::size_t>(i) * c + label] = 1.0;
        }
    }
    return weighted_log_loss(tape, student_probs, weights);
}

Tensor loss_hard(Tape& tape, const Tensor& student_probs, std::span<const int> labels) {
    if (labels.empty()) throw ValueError("loss_hard: empty labeled batch");
    if (student_probs.rank() != 2 || static_cast<int>(labels.size()) != student_probs.extent(0))
        throw ShapeError("loss_hard: label count mismatch");
    const int n = student_probs.extent(0), c = student_probs.extent(1);
    Tensor weights = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= c) throw ValueError("loss_hard: label out of range");
        weights.data[static_cast<std::size_t>(i) * c + label] = 1.0;
    }
    return weighted_log_loss(tape, student_probs, weights);
}

StageResult train_stage(const ModelSpec& spec, const Parameters& start, std::span<const ImageSample> data,
                        LossKind kind, const SoftLabelSet* soft, const StageConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw ValueError("train_stage: empty training set");
    if ((kind == LossKind::Unlabeled || kind == LossKind::Conditional) && soft == nullptr)
        throw ValueError("train_stage: distillation loss requires soft labels");
    if (soft && soft->count != static_cast<int>(data.size()))
        throw ShapeError("train_stage: soft-label count does not match sample count");

    std::vector<int> labels;
    if (kind == LossKind::Hard || kind == LossKind::Conditional) labels = labels_of(data);
    // Training accuracy target: ground truth where available, otherwise
    // agreement with the teacher's argmax.
    const std::vector<int>* acc_target = &labels;
    std::vector<int> teacher_argmax;
    if (kind == LossKind::Unlabeled) {
        teacher_argmax = soft->argmax;
        acc_target = &teacher_argmax;
    }

    StageResult result;
    result.params = start;
    std::vector<Tensor> velocity;
    velocity.reserve(result.params.tensors.size());
    for (const auto& t : result.params.tensors) velocity.push_back(Tensor::zeros(t.shape));

    const int n = static_cast<int>(data.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffler(split_seed(cfg.seed, 0xe0c + static_cast<std::uint64_t>(epoch)));
        shuffler.shuffle(order);

        double loss_sum = 0.0;
        int correct = 0;
        for (int at = 0; at < n; at += cfg.batch_size) {
            const int bsz = std::min(cfg.batch_size, n - at);
            std::vector<ImageSample> batch_samples;
            batch_samples.reserve(static_cast<std::size_t>(bsz));
            std::vector<int> batch_labels;
            SoftLabelSet batch_soft;
            if (soft) {
                batch_soft.num_classes = soft->num_classes;
                batch_soft.count = bsz;
                batch_soft.teacher_checksum = soft->teacher_checksum;
            }
            for (int i = 0; i < bsz; ++i) {
                const int idx = order[static_cast<std::size_t>(at + i)];
                batch_samples.push_back(data[static_cast<std::size_t>(idx)]);
                if (!labels.empty()) batch_labels.push_back(labels[static_cast<std::size_t>(idx)]);
                if (soft) {
                    const auto row = soft->row(idx);
                    batch_soft.probs.insert(batch_soft.probs.end(), row.begin(), row.end());
                    batch_soft.argmax.push_back(soft->argmax[static_cast<std::size_t>(idx)]);
                }
            }

            Tape tape;
            const Tensor probs = forward(spec, result.params, to_batch(batch_samples), &tape);
            Tensor loss;
            switch (kind) {
                case LossKind::Hard:
                    loss = loss_hard(tape, probs, batch_labels);
                    break;
                case LossKind::Unlabeled:
                    loss = loss_unlabeled(tape, probs, batch_soft);
                    break;
                case LossKind::Conditional:
                    loss = loss_conditional(tape, probs, batch_soft, batch_labels);
                    break;
            }
            tape.backward(loss.node);

            for (std::size_t p = 0; p < result.params.tensors.size(); ++p) {
                const auto* g = tape.grad(result.params.tensors[p].node);
                auto& v = velocity[p].data;
                auto& w = result.params.tensors[p].data;
                if (g == nullptr) continue;
                for (std::size_t j = 0; j < w.size(); ++j) {
                    v[j] = cfg.momentum * v[j] - cfg.learning_rate * (*g)[j];
                    w[j] += v[j];
                }
            }

            loss_sum += loss.data[0] * bsz;
            const auto preds = predictions(probs);
            for (int i = 0; i < bsz; ++i) {
                const int idx = order[static_cast<std::size_t>(at + i)];
                if (preds[static_cast<std::size_t>(i)] == (*acc_target)[static_cast<std::size_t>(idx)]) ++correct;
            }
        }

        EpochStat stat;
        stat.epoch = epoch;
        stat.loss = loss_sum / n;
        stat.train_accuracy = static_cast<double>(correct) / n;
        result.history.push_back(stat);
        if (cfg.stop_accuracy && stat.train_accuracy >= *cfg.stop_accuracy) break;
    }
    return result;
}

ModelSpec with_num_classes(const ModelSpec& spec, int num_classes) {
    ModelSpec out = spec;
    out.num_classes = num_classes;
    for (auto it = out.layers.rbegin(); it != out.layers.rend(); ++it)
        if (it->kind == LayerKind::Dense) {
            it->out_features = num_classes;
            break;
        }
    propagate_shapes(out);
    return out;
}

TeacherResult train_teacher(const LabeledSet& source, std::span<const ImageSample> target, int target_classes,
                            const ModelSpec& spec, const StageConfig& cfg_pretrain, const StageConfig& cfg_finetune) {
    if (spec.num_classes != target_classes) throw ShapeError("train_teacher: spec must be built for target classes");
    TeacherResult result;
    Parameters params;
    if (!source.samples.empty()) {
        if (source.samples.front().channels != spec.input_shape[0] ||
            source.samples.front().height != spec.input_shape[1] ||
            source.samples.front().width != spec.input_shape[2])
            throw ShapeError("train_teacher: source input shape does not match the model");
        const ModelSpec src_spec = with_num_classes(spec, source.num_classes);
        StageResult pre = train_stage(src_spec, init_parameters(src_spec, cfg_pretrain.seed), source.samples,
                                      LossKind::Hard, nullptr, cfg_pretrain);
        result.stages.push_back({"pretrain", std::move(pre.history)});
        // Head replacement: keep the body, re-draw the classifier layer.
        params = init_parameters(spec, cfg_finetune.seed);
        for (std::size_t i = 0; i + 2 < params.tensors.size(); ++i) params.tensors[i] = pre.params.tensors[i];
    } else {
        params = init_parameters(spec, cfg_finetune.seed);
    }
    StageResult fine = train_stage(spec, params, target, LossKind::Hard, nullptr, cfg_finetune);
    result.stages.push_back({"finetune", std::move(fine.history)});
    result.params = std::move(fine.params);
    return result;
}

StudentResult train_student(const ModelSpec& student_spec, const ModelSpec& teacher_spec,
                            const Parameters& teacher_params, std::span<const ImageSample> unlabeled,
                            std::span<const ImageSample> labeled, const StageConfig& cfg1, const StageConfig& cfg2,
                            const StageConfig& cfg3, const StudentStages& enable) {
    if (!enable.stage1_ul && !enable.stage2_kd && !enable.stage3_hard)
        throw ValueError("train_student: at least one stage must be enabled");
    if (enable.stage1_ul && unlabeled.empty()) throw ValueError("train_student: stage 1 requires unlabeled data");
    if (student_spec.num_classes != teacher_spec.num_classes)
        throw ShapeError("train_student: teacher and student class counts differ");

    StudentResult result;
    result.params = init_parameters(student_spec, cfg1.seed);
    if (enable.stage1_ul) {
        const SoftLabelSet soft = compute_soft_labels(teacher_spec, teacher_params, unlabeled);
        StageResult r = train_stage(student_spec, result.params, unlabeled, LossKind::Unlabeled, &soft, cfg1);
        result.params = std::move(r.params);
        result.stages.push_back({"ul", std::move(r.history)});
    }
    if (enable.stage2_kd) {
        const SoftLabelSet soft = compute_soft_labels(teacher_spec, teacher_params, labeled);
        StageResult r = train_stage(student_spec, result.params, labeled, LossKind::Conditional, &soft, cfg2);
        result.params = std::move(r.params);
        result.stages.push_back({"kd", std::move(r.history)});
    }
    if (enable.stage3_hard) {
        StageResult r = train_stage(student_spec, result.params, labeled, LossKind::Hard, nullptr, cfg3);
        result.params = std::move(r.params);
        result.stages.push_back({"hard", std::move(r.history)});
    }
    return result;
}

}  // namespace kdlab
