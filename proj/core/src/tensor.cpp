#include "kdlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace kdlab {

int shape_size(const std::vector<int>& shape) {
    int n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive");
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_size(shape) != static_cast<int>(data.size()))
        throw ShapeError("tensor value count does not match shape");
}

Tensor Tensor::zeros(std::vector<int> shape) {
    const int n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    const int n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

int Tape::push(std::vector<int> shape, std::function<void()> back) {
    nodes_.push_back(Node{std::move(shape), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor& t) {
    t.requires_grad = true;
    t.node = push(t.shape, {});
    return t.node;
}

void Tape::accumulate(int node, const std::vector<double>& g) {
    auto& buf = grad_buffer(node);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

std::vector<double>& Tape::grad_buffer(int node) {
    auto& buf = grads_[static_cast<std::size_t>(node)];
    if (buf.empty())
        buf.assign(static_cast<std::size_t>(shape_size(nodes_[static_cast<std::size_t>(node)].shape)), 0.0);
    return buf;
}

const std::vector<double>* Tape::grad(int node) const {
    if (node < 0 || node >= static_cast<int>(grads_.size())) return nullptr;
    const auto& buf = grads_[static_cast<std::size_t>(node)];
    return buf.empty() ? nullptr : &buf;
}

Tensor Tape::grad_tensor(const Tensor& leaf) const {
    const auto* g = grad(leaf.node);
    if (g == nullptr) return Tensor::zeros(leaf.shape);
    return Tensor(leaf.shape, *g);
}

void Tape::backward(int loss_node) {
    if (loss_node < 0 || loss_node >= static_cast<int>(nodes_.size()))
        throw ValueError("backward: loss node is not on this tape");
    if (shape_size(nodes_[static_cast<std::size_t>(loss_node)].shape) != 1)
        throw ShapeError("backward: loss node must be scalar");
    grads_.assign(nodes_.size(), {});
    grad_buffer(loss_node)[0] = 1.0;
    for (int i = loss_node; i >= 0; --i) {
        const auto& node = nodes_[static_cast<std::size_t>(i)];
        if (node.back && !grads_[static_cast<std::size_t>(i)].empty()) node.back();
    }
}

namespace {

int conv_out_extent(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

}  // namespace

Tensor Tape::conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    if (input.rank() != 4 || kernel.rank() != 4)
        throw ShapeError("conv2d: input and kernel must be rank 4");
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    if (padding < 0) throw ValueError("conv2d: padding must be >= 0");
    const int n = input.extent(0), cin = input.extent(1), h = input.extent(2), w = input.extent(3);
    const int cout = kernel.extent(0), kcin = kernel.extent(1), kh = kernel.extent(2), kw = kernel.extent(3);
    if (cin != kcin) throw ShapeError("conv2d: input channels do not match kernel channels");
    if (kh > h + 2 * padding || kw > w + 2 * padding)
        throw ShapeError("conv2d: kernel larger than padded input");
    const int ho = conv_out_extent(h, kh, stride, padding);
    const int wo = conv_out_extent(w, kw, stride, padding);

    Tensor out = Tensor::zeros({n, cout, ho, wo});
    const double* in = input.data.data();
    const double* kr = kernel.data.data();
    double* op = out.data.data();
    for (int b = 0; b < n; ++b)
        for (int oc = 0; oc < cout; ++oc)
            for (int ic = 0; ic < cin; ++ic) {
                const double* img = in + (static_cast<std::size_t>(b) * cin + ic) * h * w;
                const double* ker = kr + (static_cast<std::size_t>(oc) * cin + ic) * kh * kw;
                double* dst = op + (static_cast<std::size_t>(b) * cout + oc) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy0 = oy * stride - padding;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix0 = ox * stride - padding;
                        double acc = 0.0;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= h) continue;
                            const double* row = img + static_cast<std::size_t>(iy) * w;
                            const double* krow = ker + static_cast<std::size_t>(ky) * kw;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += row[ix] * krow[kx];
                            }
                        }
                        dst[static_cast<std::size_t>(oy) * wo + ox] += acc;
                    }
                }
            }

    if (input.node < 0 && kernel.node < 0) return out;

    const int in_node = input.node, k_node = kernel.node;
    Tensor in_copy = input, k_copy = kernel;
    out.node = push(out.shape, [this, in_copy, k_copy, in_node, k_node, stride, padding, n, cin, cout, h, w, ho, wo,
                                kh, kw, self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        std::vector<double>* gin = in_node >= 0 ? &grad_buffer(in_node) : nullptr;
        std::vector<double>* gk = k_node >= 0 ? &grad_buffer(k_node) : nullptr;
        for (int b = 0; b < n; ++b)
            for (int oc = 0; oc < cout; ++oc)
                for (int ic = 0; ic < cin; ++ic) {
                    const double* img = in_copy.data.data() + (static_cast<std::size_t>(b) * cin + ic) * h * w;
                    const double* ker = k_copy.data.data() + (static_cast<std::size_t>(oc) * cin + ic) * kh * kw;
                    const double* g = gout.data() + (static_cast<std::size_t>(b) * cout + oc) * ho * wo;
                    double* gi = gin ? gin->data() + (static_cast<std::size_t>(b) * cin + ic) * h * w : nullptr;
                    double* gkr = gk ? gk->data() + (static_cast<std::size_t>(oc) * cin + ic) * kh * kw : nullptr;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy0 = oy * stride - padding;
                        for (int ox = 0; ox < wo; ++ox) {
                            const double gv = g[static_cast<std::size_t>(oy) * wo + ox];
                            if (gv == 0.0) continue;
                            const int ix0 = ox * stride - padding;
                            for (int ky = 0; ky < kh; ++ky) {
                                const int iy = iy0 + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ix = ix0 + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    const std::size_t ii = static_cast<std::size_t>(iy) * w + ix;
                                    const std::size_t ki = static_cast<std::size_t>(ky) * kw + kx;
                                    if (gi) gi[ii] += gv * ker[ki];
                                    if (gkr) gkr[ki] += gv * img[ii];
                                }
                            }
                        }
                    }
                }
    });
    return out;
}

Tensor Tape::add_channel_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 4 || bias.rank() != 1 || bias.extent(0) != x.extent(1))
        throw ShapeError("add_channel_bias: bias must match channel count");
    const int n = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
    Tensor out = x;
    out.node = -1;
    out.requires_grad = false;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            double* dst = out.data.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
            const double bv = bias.data[static_cast<std::size_t>(ch)];
            for (int i = 0; i < hw; ++i) dst[i] += bv;
        }
    if (x.node < 0 && bias.node < 0) return out;
    const int x_node = x.node, b_node = bias.node;
    out.node = push(out.shape, [this, x_node, b_node, n, c, hw, self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        if (x_node >= 0) accumulate(x_node, gout);
        if (b_node >= 0) {
            auto& gb = grad_buffer(b_node);
            for (int b = 0; b < n; ++b)
                for (int ch = 0; ch < c; ++ch) {
                    const double* g = gout.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += g[i];
                    gb[static_cast<std::size_t>(ch)] += acc;
                }
        }
    });
    return out;
}

Tensor Tape::matmul(const Tensor& x, const Tensor& w) {
    if (x.rank() != 2 || w.rank() != 2 || x.extent(1) != w.extent(0))
        throw ShapeError("matmul: inner extents do not match");
    const int n = x.extent(0), f = x.extent(1), o = w.extent(1);
    Tensor out = Tensor::zeros({n, o});
    for (int i = 0; i < n; ++i) {
        const double* xi = x.data.data() + static_cast<std::size_t>(i) * f;
        double* oi = out.data.data() + static_cast<std::size_t>(i) * o;
        for (int k = 0; k < f; ++k) {
            const double xv = xi[k];
            const double* wk = w.data.data() + static_cast<std::size_t>(k) * o;
            for (int j = 0; j < o; ++j) oi[j] += xv * wk[j];
        }
    }
    if (x.node < 0 && w.node < 0) return out;
    const int x_node = x.node, w_node = w.node;
    Tensor x_copy = x, w_copy = w;
    out.node = push(out.shape, [this, x_copy, w_copy, x_node, w_node, n, f, o,
                                self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        if (x_node >= 0) {
            auto& gx = grad_buffer(x_node);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < f; ++k) {
                    const double* wk = w_copy.data.data() + static_cast<std::size_t>(k) * o;
                    const double* g = gout.data() + static_cast<std::size_t>(i) * o;
                    double acc = 0.0;
                    for (int j = 0; j < o; ++j) acc += g[j] * wk[j];
                    gx[static_cast<std::size_t>(i) * f + k] += acc;
                }
        }
        if (w_node >= 0) {
            auto& gw = grad_buffer(w_node);
            for (int i = 0; i < n; ++i) {
                const double* xi = x_copy.data.data() + static_cast<std::size_t>(i) * f;
                const double* g = gout.data() + static_cast<std::size_t>(i) * o;
                for (int k = 0; k < f; ++k) {
                    const double xv = xi[k];
                    double* wk = gw.data() + static_cast<std::size_t>(k) * o;
                    for (int j = 0; j < o; ++j) wk[j] += xv * g[j];
                }
            }
        }
    });
    return out;
}

Tensor Tape::add_row_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.extent(0) != x.extent(1))
        throw ShapeError("add_row_bias: bias must match feature count");
    const int n = x.extent(0), o = x.extent(1);
    Tensor out = x;
    out.node = -1;
    out.requires_grad = false;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j)
            out.data[static_cast<std::size_t>(i) * o + j] += bias.data[static_cast<std::size_t>(j)];
    if (x.node < 0 && bias.node < 0) return out;
    const int x_node = x.node, b_node = bias.node;
    out.node = push(out.shape, [this, x_node, b_node, n, o, self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        if (x_node >= 0) accumulate(x_node, gout);
        if (b_node >= 0) {
            auto& gb = grad_buffer(b_node);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < o; ++j) gb[static_cast<std::size_t>(j)] += gout[static_cast<std::size_t>(i) * o + j];
        }
    });
    return out;
}

Tensor Tape::relu(const Tensor& x) {
    Tensor out = x;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    if (x.node < 0) return out;
    std::vector<char> mask(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) mask[i] = x.data[i] > 0.0 ? 1 : 0;
    const int x_node = x.node;
    out.node = push(out.shape, [this, x_node, mask = std::move(mask), self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        auto& gx = grad_buffer(x_node);
        for (std::size_t i = 0; i < gout.size(); ++i)
            if (mask[i]) gx[i] += gout[i];
    });
    return out;
}

Tensor Tape::maxpool2x2(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("maxpool2x2: input must be rank 4");
    const int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2x2: spatial extents must be even");
    const int ho = h / 2, wo = w / 2;
    Tensor out = Tensor::zeros({n, c, ho, wo});
    std::vector<int> argmax(out.data.size());
    for (int b = 0; b < n * c; ++b) {
        const double* img = x.data.data() + static_cast<std::size_t>(b) * h * w;
        double* dst = out.data.data() + static_cast<std::size_t>(b) * ho * wo;
        int* am = argmax.data() + static_cast<std::size_t>(b) * ho * wo;
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                int best = (2 * oy) * w + 2 * ox;
                double bv = img[best];
                const int cand[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                     (2 * oy + 1) * w + 2 * ox + 1};
                for (int idx : cand)
                    if (img[idx] > bv) {
                        bv = img[idx];
                        best = idx;
                    }
                dst[static_cast<std::size_t>(oy) * wo + ox] = bv;
                am[static_cast<std::size_t>(oy) * wo + ox] = best;
            }
    }
    if (x.node < 0) return out;
    const int x_node = x.node;
    const std::size_t plane = static_cast<std::size_t>(h) * w, oplane = static_cast<std::size_t>(ho) * wo;
    out.node = push(out.shape, [this, x_node, argmax = std::move(argmax), nplanes = n * c, plane, oplane,
                                self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        auto& gx = grad_buffer(x_node);
        for (int b = 0; b < nplanes; ++b)
            for (std::size_t i = 0; i < oplane; ++i)
                gx[static_cast<std::size_t>(b) * plane +
                   static_cast<std::size_t>(argmax[static_cast<std::size_t>(b) * oplane + i])] +=
                    gout[static_cast<std::size_t>(b) * oplane + i];
    });
    return out;
}

Tensor Tape::flatten(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("flatten: input must be rank 4");
    Tensor out = x;
    out.shape = {x.extent(0), x.extent(1) * x.extent(2) * x.extent(3)};
    out.node = -1;
    out.requires_grad = false;
    if (x.node < 0) return out;
    const int x_node = x.node;
    out.node = push(out.shape, [this, x_node, self = static_cast<int>(nodes_.size())]() {
        accumulate(x_node, grads_[static_cast<std::size_t>(self)]);
    });
    return out;
}

Tensor Tape::softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax: input must be rank 2");
    const int n = logits.extent(0), c = logits.extent(1);
    Tensor out = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        const double* row = logits.data.data() + static_cast<std::size_t>(i) * c;
        double* dst = out.data.data() + static_cast<std::size_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            dst[j] = std::exp(row[j] - mx);
            z += dst[j];
        }
        for (int j = 0; j < c; ++j) dst[j] /= z;
    }
    if (logits.node < 0) return out;
    const int x_node = logits.node;
    Tensor probs = out;
    out.node = push(out.shape, [this, x_node, probs, n, c, self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        auto& gx = grad_buffer(x_node);
        for (int i = 0; i < n; ++i) {
            const double* p = probs.data.data() + static_cast<std::size_t>(i) * c;
            const double* g = gout.data() + static_cast<std::size_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g[j] * p[j];
            for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(i) * c + j] += p[j] * (g[j] - dot);
        }
    });
    return out;
}

Tensor Tape::log_clamped(const Tensor& x, double eps) {
    Tensor out = x;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v = std::log(v < eps ? eps : v);
    if (x.node < 0) return out;
    const int x_node = x.node;
    Tensor x_copy = x;
    out.node = push(out.shape, [this, x_node, x_copy, eps, self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        auto& gx = grad_buffer(x_node);
        for (std::size_t i = 0; i < gout.size(); ++i)
            if (x_copy.data[i] >= eps) gx[i] += gout[i] / x_copy.data[i];
    });
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("mul: shapes differ");
    Tensor out = a;
    out.node = -1;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    if (a.node < 0 && b.node < 0) return out;
    const int a_node = a.node, b_node = b.node;
    Tensor a_copy = a, b_copy = b;
    out.node = push(out.shape, [this, a_node, b_node, a_copy, b_copy, self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        if (a_node >= 0) {
            auto& ga = grad_buffer(a_node);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * b_copy.data[i];
        }
        if (b_node >= 0) {
            auto& gb = grad_buffer(b_node);
            for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * a_copy.data[i];
        }
    });
    return out;
}

Tensor Tape::masked_sum(const Tensor& x, const Tensor& mask) {
    if (!x.same_shape(mask)) throw ShapeError("masked_sum: shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) acc += x.data[i] * mask.data[i];
    Tensor out({1}, {acc});
    if (x.node < 0) return out;
    const int x_node = x.node;
    Tensor m_copy = mask;
    out.node = push(out.shape, [this, x_node, m_copy, self = static_cast<int>(nodes_.size())]() {
        const double g = grads_[static_cast<std::size_t>(self)][0];
        auto& gx = grad_buffer(x_node);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * m_copy.data[i];
    });
    return out;
}

Tensor Tape::sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data) acc += v;
    Tensor out({1}, {acc});
    if (x.node < 0) return out;
    const int x_node = x.node;
    out.node = push(out.shape, [this, x_node, self = static_cast<int>(nodes_.size())]() {
        const double g = grads_[static_cast<std::size_t>(self)][0];
        auto& gx = grad_buffer(x_node);
        for (double& v : gx) v += g;
    });
    return out;
}

Tensor Tape::mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.data.size());
    double acc = 0.0;
    for (double v : x.data) acc += v;
    Tensor out({1}, {acc * inv});
    if (x.node < 0) return out;
    const int x_node = x.node;
    out.node = push(out.shape, [this, x_node, inv, self = static_cast<int>(nodes_.size())]() {
        const double g = grads_[static_cast<std::size_t>(self)][0] * inv;
        auto& gx = grad_buffer(x_node);
        for (double& v : gx) v += g;
    });
    return out;
}

Tensor Tape::scale(const Tensor& x, double factor) {
    Tensor out = x;
    out.node = -1;
    out.requires_grad = false;
    for (double& v : out.data) v *= factor;
    if (x.node < 0) return out;
    const int x_node = x.node;
    out.node = push(out.shape, [this, x_node, factor, self = static_cast<int>(nodes_.size())]() {
        const auto& gout = grads_[static_cast<std::size_t>(self)];
        auto& gx = grad_buffer(x_node);
        for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * factor;
    });
    return out;
}

}  // namespace kdlab
