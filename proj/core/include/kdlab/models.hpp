#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdlab/tensor.hpp"

namespace kdlab {

enum class LayerKind { Conv3x3, Relu, MaxPool, Flatten, Dense, SoftmaxHead };

struct LayerSpec {
    LayerKind kind;
    int out_features = 0;  // conv: output channels; dense: output units
};

// Symbolic network description. Shape compatibility is checked at build
// time; a ModelSpec that exists always admits a forward pass.
struct ModelSpec {
    std::vector<LayerSpec> layers;
    std::array<int, 3> input_shape{};  // C, H, W
    int num_classes = 0;

    std::uint64_t hash() const;
};

// Trainable weights for a ModelSpec: weight and bias tensor per Conv3x3 /
// Dense layer, in layer order.
struct Parameters {
    std::vector<Tensor> tensors;

    std::uint64_t checksum() const;
    bool all_finite() const;
};

// Validates layer-to-layer shape compatibility; throws ShapeError with the
// offending layer index on failure. Returns per-layer output shapes
// ({C,H,W} for spatial layers, {F,1,1} after flatten/dense).
std::vector<std::array<int, 3>> propagate_shapes(const ModelSpec& spec);

// Filter counts 20,20,30,30,40,40,160,160,250,250 scaled by width_scale
// (ceil), pool after every second conv, dense head.
ModelSpec build_simple10(std::array<int, 3> input_shape, int num_classes, double width_scale = 1.0);

// VGG-16 conv stack with filter counts divided by `divisor` (min 1),
// pooling after each block, dense head.
ModelSpec build_vgg16(int divisor, std::array<int, 3> input_shape, int num_classes);

// Parses "simple10", "simple10@0.1", "vgg", "vgg/2", "vgg/4".
ModelSpec build_named(const std::string& name, std::array<int, 3> input_shape, int num_classes);

// He-uniform weights, zero biases; deterministic in (spec, seed).
Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed);

// Forward pass to class probabilities [N, num_classes]. With a tape, every
// parameter tensor is registered as a gradient leaf.
Tensor forward(const ModelSpec& spec, Parameters& params, const Tensor& batch, Tape* tape = nullptr);

// Forward without gradient bookkeeping.
Tensor forward(const ModelSpec& spec, const Parameters& params, const Tensor& batch);

std::size_t parameter_count(const ModelSpec& spec);
std::size_t conv_parameter_count(const ModelSpec& spec);

// KDLP parameter file: magic "KDLP", version u16, spec hash u64, tensor
// count u32, per-tensor (rank u8, extents u32, payload little-endian f64),
// trailing CRC-64 of all preceding bytes.
void save_parameters(const Parameters& params, const ModelSpec& spec, const std::filesystem::path& path);
Parameters load_parameters(const ModelSpec& spec, const std::filesystem::path& path);

}  // namespace kdlab
