#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kdlab/errors.hpp"

namespace kdlab {

// Dense row-major tensor of doubles. A tensor participates in autodiff when
// it has been registered on a Tape (node >= 0); plain tensors are just
// value buffers.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    int node = -1;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);

    int size() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool is_scalar() const { return data.size() == 1; }
    bool all_finite() const;
};

int shape_size(const std::vector<int>& shape);

// Reverse-mode tape. Operations append nodes; backward() walks the tape in
// reverse and accumulates gradients. One tape per training step; tapes are
// single-owner and not shared between threads.
class Tape {
public:
    // Registers a leaf tensor (parameter or input needing a gradient).
    // Mutates t.node. Idempotent per tape only if called once; callers
    // register each leaf exactly once per tape.
    int leaf(Tensor& t);

    // --- differentiable operations -------------------------------------
    // Cross-correlation, NCHW input, OIHW kernel.
    Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
    // x: [N,C,H,W], bias: [C]
    Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
    // x: [N,F], w: [F,O]
    Tensor matmul(const Tensor& x, const Tensor& w);
    // x: [N,O], bias: [O]
    Tensor add_row_bias(const Tensor& x, const Tensor& bias);
    Tensor relu(const Tensor& x);
    // 2x2 window, stride 2; requires even spatial extents.
    Tensor maxpool2x2(const Tensor& x);
    // [N,C,H,W] -> [N, C*H*W]
    Tensor flatten(const Tensor& x);
    // Row-wise stabilized softmax over the last axis of a [N,C] tensor.
    Tensor softmax(const Tensor& logits);
    // Elementwise log(max(x, eps)); gradient is zero where clamped.
    Tensor log_clamped(const Tensor& x, double eps = 1e-12);
    // Elementwise product; either side may be a constant (non-node) tensor.
    Tensor mul(const Tensor& a, const Tensor& b);
    // Sum of selected elements; mask entries are 0/1 weights.
    Tensor masked_sum(const Tensor& x, const Tensor& mask);
    Tensor sum(const Tensor& x);
    Tensor mean(const Tensor& x);
    Tensor scale(const Tensor& x, double factor);

    // --- backward ------------------------------------------------------
    // loss_node must refer to a scalar node on this tape.
    void backward(int loss_node);

    // Gradient of a node after backward(); nullptr if the node was not
    // reached. The vector has the node tensor's element count.
    const std::vector<double>* grad(int node) const;
    Tensor grad_tensor(const Tensor& leaf) const;

    int num_nodes() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        std::vector<int> shape;
        std::function<void()> back;  // reads own grad, accumulates into inputs
    };

    int push(std::vector<int> shape, std::function<void()> back);
    void accumulate(int node, const std::vector<double>& g);
    std::vector<double>& grad_buffer(int node);

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;

    friend struct TapeAccess;
};

}  // namespace kdlab
