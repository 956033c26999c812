#include "kdlab/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "kdlab/rng.hpp"

namespace kdlab {

namespace {

bool known_preset(const std::string& p) {
    for (const char* name : kPresetNames)
        if (p == name) return true;
    return false;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

void validate_stage(const StageConfig& s, const std::string& name, std::vector<std::string>& errors) {
    if (s.epochs < 0) errors.push_back(name + ".epochs must be >= 0");
    if (s.batch_size < 1) errors.push_back(name + ".batch_size must be >= 1");
    if (s.learning_rate <= 0.0) errors.push_back(name + ".learning_rate must be positive");
    if (s.momentum < 0.0 || s.momentum >= 1.0) errors.push_back(name + ".momentum must be in [0,1)");
    if (s.stop_accuracy && (*s.stop_accuracy <= 0.0 || *s.stop_accuracy > 1.0))
        errors.push_back(name + ".stop_accuracy must be in (0,1]");
}

}  // namespace

void ExperimentConfig::validate() const {
    std::vector<std::string> errors;
    if (!known_preset(preset)) errors.push_back("preset must be one of base, base_kd, base_ul, base_kd_ul, fig2_same_size");
    if (num_classes < 2) errors.push_back("num_classes must be >= 2");
    if (image_size < 16) errors.push_back("image_size must be >= 16");
    if (channels != 1 && channels != 3) errors.push_back("channels must be 1 or 3");
    if (target_n < num_classes * 10) errors.push_back("target_n must be >= 10 * num_classes");
    if (source_classes < 2) errors.push_back("source_classes must be >= 2");
    if (source_n < source_classes) errors.push_back("source_n must be >= source_classes");
    if (unlabeled_m < 0) errors.push_back("unlabeled_m must be >= 0");
    if (folds < 2) errors.push_back("folds must be >= 2");
    if (folds > target_n) errors.push_back("folds must be <= target_n");
    if (workers < 1) errors.push_back("workers must be >= 1");
    if (eq_tile != 0 && eq_tile < 2) errors.push_back("eq_tile must be 0 (auto) or >= 2");
    validate_stage(stage1, "stage1", errors);
    validate_stage(stage2, "stage2", errors);
    validate_stage(stage3, "stage3", errors);
    validate_stage(teacher_pretrain, "teacher_pretrain", errors);
    validate_stage(teacher_finetune, "teacher_finetune", errors);
    try {
        build_named(student_arch, {channels, image_size, image_size}, num_classes);
    } catch (const Error& e) {
        errors.push_back(std::string("student_arch: ") + e.what());
    }
    try {
        build_named(teacher_arch, {channels, image_size, image_size}, num_classes);
    } catch (const Error& e) {
        errors.push_back(std::string("teacher_arch: ") + e.what());
    }
    if (!errors.empty()) throw ConfigError("invalid config:\n  " + join(errors, "\n  "));
}

namespace {

struct KvFile {
    std::map<std::string, std::string> entries;
    std::set<std::string> consumed;

    void take(const std::string& key, std::string& out) {
        if (auto it = entries.find(key); it != entries.end()) {
            out = it->second;
            consumed.insert(key);
        }
    }
    void take(const std::string& key, int& out) {
        if (auto it = entries.find(key); it != entries.end()) {
            out = std::stoi(it->second);
            consumed.insert(key);
        }
    }
    void take(const std::string& key, double& out) {
        if (auto it = entries.find(key); it != entries.end()) {
            out = std::stod(it->second);
            consumed.insert(key);
        }
    }
    void take(const std::string& key, std::uint64_t& out) {
        if (auto it = entries.find(key); it != entries.end()) {
            out = std::stoull(it->second);
            consumed.insert(key);
        }
    }
    void take_opt(const std::string& key, std::optional<double>& out) {
        if (auto it = entries.find(key); it != entries.end()) {
            if (it->second == "none")
                out.reset();
            else
                out = std::stod(it->second);
            consumed.insert(key);
        }
    }
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void take_stage(KvFile& kv, const std::string& prefix, StageConfig& s) {
    kv.take(prefix + "_epochs", s.epochs);
    kv.take(prefix + "_batch_size", s.batch_size);
    kv.take(prefix + "_learning_rate", s.learning_rate);
    kv.take(prefix + "_momentum", s.momentum);
    kv.take_opt(prefix + "_stop_accuracy", s.stop_accuracy);
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    KvFile kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (kv.entries.count(key))
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": duplicate key " + key);
        kv.entries[key] = value;
    }

    ExperimentConfig cfg;
    try {
        kv.take("preset", cfg.preset);
        kv.take("student_arch", cfg.student_arch);
        kv.take("teacher_arch", cfg.teacher_arch);
        kv.take("num_classes", cfg.num_classes);
        kv.take("image_size", cfg.image_size);
        kv.take("channels", cfg.channels);
        kv.take("target_n", cfg.target_n);
        kv.take("source_n", cfg.source_n);
        kv.take("source_classes", cfg.source_classes);
        kv.take("unlabeled_m", cfg.unlabeled_m);
        kv.take("folds", cfg.folds);
        kv.take("workers", cfg.workers);
        kv.take("eq_tile", cfg.eq_tile);
        kv.take("seed", cfg.seed);
        take_stage(kv, "stage1", cfg.stage1);
        take_stage(kv, "stage2", cfg.stage2);
        take_stage(kv, "stage3", cfg.stage3);
        take_stage(kv, "teacher_pretrain", cfg.teacher_pretrain);
        take_stage(kv, "teacher_finetune", cfg.teacher_finetune);
    } catch (const std::exception& e) {
        throw ConfigError(path.string() + ": malformed value: " + e.what());
    }
    std::vector<std::string> unknown;
    for (const auto& [key, value] : kv.entries)
        if (!kv.consumed.count(key)) unknown.push_back(key);
    if (!unknown.empty()) throw ConfigError(path.string() + ": unknown keys: " + join(unknown, ", "));
    cfg.validate();
    return cfg;
}

namespace {

std::string stage_echo(const std::string& prefix, const StageConfig& s) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s_epochs = %d\n%s_batch_size = %d\n%s_learning_rate = %g\n%s_momentum = %g\n%s_stop_accuracy = %s\n",
                  prefix.c_str(), s.epochs, prefix.c_str(), s.batch_size, prefix.c_str(), s.learning_rate,
                  prefix.c_str(), s.momentum, prefix.c_str(),
                  s.stop_accuracy ? std::to_string(*s.stop_accuracy).c_str() : "none");
    return buf;
}

}  // namespace

void write_config_echo(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write config echo: " + path.string());
    out << "preset = " << cfg.preset << "\n"
        << "student_arch = " << cfg.student_arch << "\n"
        << "teacher_arch = " << cfg.teacher_arch << "\n"
        << "num_classes = " << cfg.num_classes << "\n"
        << "image_size = " << cfg.image_size << "\n"
        << "channels = " << cfg.channels << "\n"
        << "target_n = " << cfg.target_n << "\n"
        << "source_n = " << cfg.source_n << "\n"
        << "source_classes = " << cfg.source_classes << "\n"
        << "unlabeled_m = " << cfg.unlabeled_m << "\n"
        << "folds = " << cfg.folds << "\n"
        << "workers = " << cfg.workers << "\n"
        << "eq_tile = " << cfg.eq_tile << "\n"
        << "seed = " << cfg.seed << "\n"
        << stage_echo("stage1", cfg.stage1) << stage_echo("stage2", cfg.stage2) << stage_echo("stage3", cfg.stage3)
        << stage_echo("teacher_pretrain", cfg.teacher_pretrain)
        << stage_echo("teacher_finetune", cfg.teacher_finetune);
}

namespace {

StudentStages stages_for(const std::string& preset) {
    if (preset == "base") return {false, false, true};
    if (preset == "base_kd" || preset == "fig2_same_size") return {false, true, true};
    if (preset == "base_ul") return {true, false, true};
    if (preset == "base_kd_ul") return {true, true, true};
    throw ConfigError("unknown preset: " + preset);
}

StageConfig seeded(StageConfig cfg, std::uint64_t master, std::uint64_t stream) {
    cfg.seed = split_seed(master, stream);
    return cfg;
}

std::vector<ImageSample> equalize_all(std::span<const ImageSample> samples, int tile) {
    std::vector<ImageSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(local_hist_eq(s, tile));
    return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::vector<std::string>& presets,
                                const LabeledSet& target, const LabeledSet& source, const UnlabeledSet& unlabeled) {
    cfg.validate();
    for (const auto& p : presets)
        if (!known_preset(p)) throw ConfigError("unknown preset: " + p);

    const std::array<int, 3> input_shape{cfg.channels, cfg.image_size, cfg.image_size};
    const ModelSpec teacher_spec = build_named(cfg.teacher_arch, input_shape, cfg.num_classes);
    const ModelSpec student_spec = build_named(cfg.student_arch, input_shape, cfg.num_classes);

    const int tile = cfg.tile();
    const FoldPlan plan = kfold(static_cast<int>(target.samples.size()), cfg.folds, cfg.seed);

    // Test-time preprocessing is equalization only; done once up front.
    const std::vector<ImageSample> unlabeled_eq = equalize_all(unlabeled.samples, tile);
    LabeledSet source_eq;
    source_eq.num_classes = source.num_classes;
    source_eq.samples = equalize_all(source.samples, tile);

    ExperimentResult result;
    result.folds.resize(static_cast<std::size_t>(cfg.folds));

    auto run_fold = [&](int fold) {
        std::vector<ImageSample> train;
        std::vector<ImageSample> test;
        for (std::size_t i = 0; i < target.samples.size(); ++i) {
            if (plan.assignments[i] == fold) {
                test.push_back(local_hist_eq(target.samples[i], tile));
            } else {
                auto variants = augment(target.samples[i], tile);
                for (auto& v : variants) train.push_back(std::move(v));
            }
        }
        const std::vector<int> test_labels = labels_of(test);
        const Tensor test_batch = to_batch(test);

        FoldOutcome out;
        out.fold = fold;
        const std::uint64_t fold_seed = split_seed(cfg.seed, 0xf0 + static_cast<std::uint64_t>(fold));

        TeacherResult teacher =
            train_teacher(source_eq, train, cfg.num_classes, teacher_spec, seeded(cfg.teacher_pretrain, fold_seed, 1),
                          seeded(cfg.teacher_finetune, fold_seed, 2));
        out.teacher_checksum = teacher.params.checksum();
        out.teacher_metrics = evaluate(forward(teacher_spec, teacher.params, test_batch), test_labels, fold);

        for (std::size_t pi = 0; pi < presets.size(); ++pi) {
            const std::string& preset = presets[pi];
            const ModelSpec& spec = preset == "fig2_same_size" ? teacher_spec : student_spec;
            const StudentStages enable = stages_for(preset);
            const std::uint64_t preset_seed = split_seed(fold_seed, 0x100 + pi);
            StudentResult student = train_student(spec, teacher_spec, teacher.params, unlabeled_eq, train,
                                                  seeded(cfg.stage1, preset_seed, 1), seeded(cfg.stage2, preset_seed, 2),
                                                  seeded(cfg.stage3, preset_seed, 3), enable);
            PresetOutcome po;
            po.preset = preset;
            po.metrics = evaluate(forward(spec, student.params, test_batch), test_labels, fold);
            po.curves = std::move(student.stages);
            out.presets.push_back(std::move(po));
        }
        out.teacher_params = std::move(teacher.params);
        result.folds[static_cast<std::size_t>(fold)] = std::move(out);
    };

    if (cfg.workers <= 1) {
        for (int f = 0; f < cfg.folds; ++f) run_fold(f);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        const int nthreads = std::min(cfg.workers, cfg.folds);
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&]() {
                for (int f = next.fetch_add(1); f < cfg.folds; f = next.fetch_add(1)) run_fold(f);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<MetricReport> teacher_folds;
    std::map<std::string, std::vector<MetricReport>> preset_folds;
    for (const auto& fo : result.folds) {
        teacher_folds.push_back(fo.teacher_metrics);
        for (const auto& po : fo.presets) preset_folds[po.preset].push_back(po.metrics);
    }
    result.by_preset["teacher"] = summarize(std::move(teacher_folds));
    for (auto& [preset, reports] : preset_folds) result.by_preset[preset] = summarize(std::move(reports));
    return result;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

int cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const LabeledSet target =
        gen_target_set(cfg.target_n, cfg.num_classes, cfg.image_size, split_seed(cfg.seed, 1), cfg.channels);
    const LabeledSet source =
        gen_source_set(cfg.source_n, cfg.source_classes, cfg.image_size, split_seed(cfg.seed, 2), cfg.channels);
    const UnlabeledSet unlabeled =
        gen_unlabeled_set(cfg.unlabeled_m, cfg.image_size, split_seed(cfg.seed, 3), cfg.channels);
    save_dataset(target, out_dir / "target.kdds");
    save_dataset(source, out_dir / "source.kdds");
    save_dataset(unlabeled, out_dir / "unlabeled.kdds");
    for (const char* name : {"target.kdds", "source.kdds", "unlabeled.kdds"})
        std::printf("%s %s\n", hex64(dataset_file_checksum(out_dir / name)).c_str(), name);
    return 0;
}

int cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
            const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    const LabeledSet target = load_labeled(data_dir / "target.kdds");
    const LabeledSet source = load_labeled(data_dir / "source.kdds");
    const UnlabeledSet unlabeled = load_unlabeled(data_dir / "unlabeled.kdds");
    if (target.num_classes != cfg.num_classes) throw ConfigError("target dataset class count does not match config");

    write_config_echo(cfg, out_dir / "config_echo.txt");
    {
        std::ofstream sums(out_dir / "dataset_checksums.txt", std::ios::trunc);
        for (const char* name : {"target.kdds", "source.kdds", "unlabeled.kdds"})
            sums << hex64(dataset_file_checksum(data_dir / name)) << " " << name << "\n";
    }

    const ExperimentResult result = run_experiment(cfg, {cfg.preset}, target, source, unlabeled);

    const std::array<int, 3> input_shape{cfg.channels, cfg.image_size, cfg.image_size};
    const ModelSpec teacher_spec = build_named(cfg.teacher_arch, input_shape, cfg.num_classes);
    const std::string arch = cfg.preset == "fig2_same_size" ? cfg.teacher_arch : cfg.student_arch;

    std::ofstream metrics(out_dir / "metrics.csv", std::ios::trunc);
    metrics << "preset,arch,fold,accuracy,auc\n";
    std::ofstream curves(out_dir / "curves.csv", std::ios::trunc);
    curves << "preset,fold,stage,epoch,loss,train_acc\n";
    for (const auto& fo : result.folds) {
        save_parameters(fo.teacher_params, teacher_spec, out_dir / ("teacher_fold" + std::to_string(fo.fold) + ".kdlp"));
        metrics << "teacher," << cfg.teacher_arch << "," << fo.fold << "," << fmt(fo.teacher_metrics.accuracy) << ","
                << fmt(fo.teacher_metrics.auc) << "\n";
        for (const auto& po : fo.presets) {
            metrics << po.preset << "," << arch << "," << fo.fold << "," << fmt(po.metrics.accuracy) << ","
                    << fmt(po.metrics.auc) << "\n";
            for (const auto& stage : po.curves)
                for (const auto& e : stage.history)
                    curves << po.preset << "," << fo.fold << "," << stage.stage << "," << e.epoch << ","
                           << fmt(e.loss) << "," << fmt(e.train_accuracy) << "\n";
        }
    }

    const auto& summary = result.by_preset.at(cfg.preset);
    std::printf("preset=%s arch=%s mean_accuracy=%s (+/- %s) mean_auc=%s (+/- %s)\n", cfg.preset.c_str(),
                arch.c_str(), fmt(summary.mean_accuracy).c_str(), fmt(summary.stddev_accuracy).c_str(),
                fmt(summary.mean_auc).c_str(), fmt(summary.stddev_auc).c_str());
    return 0;
}

namespace {

struct CellStats {
    double acc_sum = 0.0, auc_sum = 0.0;
    int count = 0;
};

}  // namespace

int cmd_compare(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::map<std::pair<std::string, std::string>, CellStats> cells;  // (preset, arch)
    std::vector<std::string> missing;
    for (const auto& dir : run_dirs) {
        const auto path = dir / "metrics.csv";
        std::ifstream in(path);
        if (!in) {
            missing.push_back(path.string());
            continue;
        }
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string preset, arch, fold, acc, auc;
            std::getline(ss, preset, ',');
            std::getline(ss, arch, ',');
            std::getline(ss, fold, ',');
            std::getline(ss, acc, ',');
            std::getline(ss, auc, ',');
            auto& cell = cells[{preset, arch}];
            cell.acc_sum += std::stod(acc);
            cell.auc_sum += std::stod(auc);
            ++cell.count;
        }
    }
    if (!missing.empty()) throw IoError("missing run files:\n  " + join(missing, "\n  "));
    if (cells.empty()) throw ValueError("compare: no metrics rows found");

    std::set<std::string> archs, presets;
    for (const auto& [key, cell] : cells) {
        presets.insert(key.first);
        archs.insert(key.second);
    }
    // Column maxima (per architecture), accuracy and AUC separately.
    std::map<std::string, double> best_acc, best_auc;
    for (const auto& [key, cell] : cells) {
        const double acc = cell.acc_sum / cell.count, auc = cell.auc_sum / cell.count;
        best_acc[key.second] = std::max(best_acc.count(key.second) ? best_acc[key.second] : acc, acc);
        best_auc[key.second] = std::max(best_auc.count(key.second) ? best_auc[key.second] : auc, auc);
    }

    std::ofstream csv(out_dir / "summary.csv", std::ios::trunc);
    csv << "preset,arch,mean_accuracy,mean_auc,best_accuracy,best_auc\n";
    std::ofstream txt(out_dir / "summary.txt", std::ios::trunc);
    txt << "preset \\ arch";
    for (const auto& arch : archs) txt << " | " << arch;
    txt << "\n";
    for (const auto& preset : presets) {
        txt << preset;
        for (const auto& arch : archs) {
            const auto it = cells.find({preset, arch});
            if (it == cells.end()) {
                txt << " | -";
                continue;
            }
            const double acc = it->second.acc_sum / it->second.count;
            const double auc = it->second.auc_sum / it->second.count;
            const bool acc_best = acc == best_acc[arch];
            const bool auc_best = auc == best_auc[arch];
            csv << preset << "," << arch << "," << fmt(acc) << "," << fmt(auc) << "," << (acc_best ? 1 : 0) << ","
                << (auc_best ? 1 : 0) << "\n";
            txt << " | " << (acc_best ? "*" : "") << fmt(acc) << " / " << (auc_best ? "*" : "") << fmt(auc);
        }
        txt << "\n";
    }
    std::printf("wrote %s and %s\n", (out_dir / "summary.csv").string().c_str(),
                (out_dir / "summary.txt").string().c_str());
    return 0;
}

}  // namespace kdlab
