#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "kdlab/tensor.hpp"

namespace kdlab {

struct ImageSample {
    int channels = 0;  // 1 or 3
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // C*H*W row-major
    std::optional<int> label;

    std::uint8_t at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + static_cast<std::size_t>(y)) * width +
                      static_cast<std::size_t>(x)];
    }
    std::uint8_t& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + static_cast<std::size_t>(y)) * width +
                      static_cast<std::size_t>(x)];
    }
};

struct LabeledSet {
    std::vector<ImageSample> samples;
    int num_classes = 0;
};

struct UnlabeledSet {
    std::vector<ImageSample> samples;
};

struct FoldPlan {
    int k = 0;
    std::vector<int> assignments;  // per original sample
    std::uint64_t seed = 0;
};

// Per-tile histogram equalization, each channel independently. Edge tiles
// may be smaller than `tile`. A tile whose pixels are all equal passes
// through unchanged.
ImageSample local_hist_eq(const ImageSample& image, int tile);

// {equalized, row-flip, column-flip, both-flips}; equalization is applied
// first, labels are copied.
std::vector<ImageSample> augment(const ImageSample& image, int tile);

ImageSample flip_rows(const ImageSample& image);
ImageSample flip_cols(const ImageSample& image);

// Target ("retina-like") generator: dark disc plus label*kBlobsPerClass
// bright non-overlapping blobs, pixel noise. Classes are separable by blob
// count.
inline constexpr int kBlobsPerClass = 2;
LabeledSet gen_target_set(int n, int num_classes, int size, std::uint64_t seed, int channels = 3);

// Blob centers the generator placed in sample `index`; the label oracle in
// the test suite counts these against thresholded connected components.
std::vector<std::pair<int, int>> target_blob_centers(int n, int num_classes, int size, std::uint64_t seed,
                                                     int index);

// Source pretraining set: stripe / checker / gradient texture classes,
// a family distinct from the target generator.
LabeledSet gen_source_set(int n, int num_classes, int size, std::uint64_t seed, int channels = 3);

// Unlabeled pool mixing target-like discs (random blob counts), source-like
// textures, and noise/gradient images.
UnlabeledSet gen_unlabeled_set(int m, int size, std::uint64_t seed, int channels = 3);

// Deterministic shuffled partition into k folds of size floor(n/k) or
// ceil(n/k). Operates on original (pre-augmentation) indices; augmentation
// after the split keeps all variants of one image in one fold.
FoldPlan kfold(int n, int k, std::uint64_t seed);

// KDDS dataset file: magic "KDDS", version u16, flags u16 (bit 0 =
// labeled), num_classes u16, count u32, C u8, H u16, W u16, per-sample
// pixel bytes (+ label u16 when labeled), trailing CRC-64.
void save_dataset(const LabeledSet& set, const std::filesystem::path& path);
void save_dataset(const UnlabeledSet& set, const std::filesystem::path& path);
LabeledSet load_labeled(const std::filesystem::path& path);
UnlabeledSet load_unlabeled(const std::filesystem::path& path);
std::uint64_t dataset_file_checksum(const std::filesystem::path& path);

// Pixels scaled to [0,1] as a [N,C,H,W] batch.
Tensor to_batch(std::span<const ImageSample> samples);

std::vector<int> labels_of(std::span<const ImageSample> samples);

}  // namespace kdlab
