#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kdlab/data.hpp"
#include "kdlab/distill.hpp"
#include "kdlab/eval.hpp"
#include "kdlab/models.hpp"

namespace kdlab {

inline constexpr const char* kPresetNames[] = {"base", "base_kd", "base_ul", "base_kd_ul", "fig2_same_size"};

struct ExperimentConfig {
    std::string preset = "base";
    std::string student_arch = "simple10@0.1";
    std::string teacher_arch = "simple10@0.2";

    int num_classes = 3;
    int image_size = 32;
    int channels = 3;
    int target_n = 600;
    int source_n = 400;
    int source_classes = 4;
    int unlabeled_m = 2000;
    int folds = 5;
    int workers = 1;
    int eq_tile = 0;  // 0: image_size / 4
    std::uint64_t seed = 1;

    StageConfig stage1{/*epochs=*/60, 16, 0.02, 0.9, 0.9, 0};
    StageConfig stage2{/*epochs=*/20, 16, 0.02, 0.9, {}, 0};
    StageConfig stage3{/*epochs=*/20, 16, 0.02, 0.9, {}, 0};
    StageConfig teacher_pretrain{/*epochs=*/10, 16, 0.02, 0.9, {}, 0};
    StageConfig teacher_finetune{/*epochs=*/20, 16, 0.02, 0.9, {}, 0};

    int tile() const { return eq_tile > 0 ? eq_tile : std::max(2, image_size / 4); }

    // Throws ConfigError listing every violated field.
    void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
void write_config_echo(const ExperimentConfig& cfg, const std::filesystem::path& path);

struct PresetOutcome {
    std::string preset;
    MetricReport metrics;
    std::vector<StageHistory> curves;
};

struct FoldOutcome {
    int fold = 0;
    MetricReport teacher_metrics;
    std::uint64_t teacher_checksum = 0;
    Parameters teacher_params;
    std::vector<PresetOutcome> presets;
};

struct ExperimentResult {
    std::vector<FoldOutcome> folds;
    std::map<std::string, CvSummary> by_preset;  // includes "teacher"
};

// Runs the teacher pipeline and the requested student presets under k-fold
// cross-validation. Fold jobs run on up to cfg.workers threads; results are
// assembled in fold order, so output is independent of scheduling.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::vector<std::string>& presets,
                                const LabeledSet& target, const LabeledSet& source, const UnlabeledSet& unlabeled);

// CLI entry points.
int cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
int cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
            const std::filesystem::path& out_dir);
int cmd_compare(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace kdlab
