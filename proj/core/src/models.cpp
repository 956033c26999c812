#include "kdlab/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "kdlab/crc64.hpp"
#include "kdlab/rng.hpp"

namespace kdlab {

namespace {

void append_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

int head_hidden_units(double scale) {
    const int units = static_cast<int>(std::lround(128.0 * scale));
    return units < 8 ? 8 : units;
}

void append_head(ModelSpec& spec, double scale) {
    spec.layers.push_back({LayerKind::Flatten});
    spec.layers.push_back({LayerKind::Dense, head_hidden_units(scale)});
    spec.layers.push_back({LayerKind::Relu});
    spec.layers.push_back({LayerKind::Dense, spec.num_classes});
    spec.layers.push_back({LayerKind::SoftmaxHead});
}

}  // namespace

std::uint64_t ModelSpec::hash() const {
    std::vector<unsigned char> buf;
    append_le(buf, static_cast<std::uint64_t>(input_shape[0]), 4);
    append_le(buf, static_cast<std::uint64_t>(input_shape[1]), 4);
    append_le(buf, static_cast<std::uint64_t>(input_shape[2]), 4);
    append_le(buf, static_cast<std::uint64_t>(num_classes), 4);
    for (const auto& l : layers) {
        buf.push_back(static_cast<unsigned char>(l.kind));
        append_le(buf, static_cast<std::uint64_t>(l.out_features), 4);
    }
    return Crc64::of(buf.data(), buf.size());
}

std::uint64_t Parameters::checksum() const {
    Crc64 crc;
    for (const auto& t : tensors) {
        for (int e : t.shape) {
            std::uint32_t le = static_cast<std::uint32_t>(e);
            crc.update(&le, sizeof(le));
        }
        crc.update(t.data.data(), t.data.size() * sizeof(double));
    }
    return crc.value();
}

bool Parameters::all_finite() const {
    for (const auto& t : tensors)
        if (!t.all_finite()) return false;
    return true;
}

std::vector<std::array<int, 3>> propagate_shapes(const ModelSpec& spec) {
    if (spec.num_classes < 2) throw ShapeError("model: num_classes must be >= 2");
    std::array<int, 3> cur = spec.input_shape;  // C,H,W; after flatten: {F,1,1}
    bool flat = false;
    std::vector<std::array<int, 3>> out;
    out.reserve(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const std::string at = " at layer " + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Conv3x3:
                if (flat) throw ShapeError("model: conv after flatten" + at);
                if (l.out_features < 1) throw ShapeError("model: conv needs >= 1 filter" + at);
                cur[0] = l.out_features;  // 3x3, stride 1, pad 1 keeps H,W
                break;
            case LayerKind::Relu:
                break;
            case LayerKind::MaxPool:
                if (flat) throw ShapeError("model: pool after flatten" + at);
                if (cur[1] < 2 || cur[2] < 2 || cur[1] % 2 != 0 || cur[2] % 2 != 0)
                    throw ShapeError("model: spatial size too small for pooling stage" + at);
                cur[1] /= 2;
                cur[2] /= 2;
                break;
            case LayerKind::Flatten:
                cur = {cur[0] * cur[1] * cur[2], 1, 1};
                flat = true;
                break;
            case LayerKind::Dense:
                if (!flat) throw ShapeError("model: dense before flatten" + at);
                if (l.out_features < 1) throw ShapeError("model: dense needs >= 1 unit" + at);
                cur = {l.out_features, 1, 1};
                break;
            case LayerKind::SoftmaxHead:
                if (!flat || cur[0] != spec.num_classes)
                    throw ShapeError("model: head does not emit num_classes logits" + at);
                break;
        }
        out.push_back(cur);
    }
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::SoftmaxHead)
        throw ShapeError("model: final layer must be the softmax head");
    return out;
}

ModelSpec build_simple10(std::array<int, 3> input_shape, int num_classes, double width_scale) {
    if (width_scale <= 0.0) throw ValueError("build_simple10: width_scale must be positive");
    static constexpr int base_filters[10] = {20, 20, 30, 30, 40, 40, 160, 160, 250, 250};
    ModelSpec spec;
    spec.input_shape = input_shape;
    spec.num_classes = num_classes;
    for (int i = 0; i < 10; ++i) {
        const int filters = static_cast<int>(std::ceil(width_scale * base_filters[i] - 1e-9));
        if (filters < 1) throw ValueError("build_simple10: width_scale leaves a layer with no filters");
        spec.layers.push_back({LayerKind::Conv3x3, filters});
        spec.layers.push_back({LayerKind::Relu});
        if (i % 2 == 1) spec.layers.push_back({LayerKind::MaxPool});
    }
    append_head(spec, width_scale);
    propagate_shapes(spec);
    return spec;
}

ModelSpec build_vgg16(int divisor, std::array<int, 3> input_shape, int num_classes) {
    if (divisor < 1) throw ValueError("build_vgg16: divisor must be positive");
    static constexpr int blocks[5] = {2, 2, 3, 3, 3};
    static constexpr int widths[5] = {64, 128, 256, 512, 512};
    ModelSpec spec;
    spec.input_shape = input_shape;
    spec.num_classes = num_classes;
    for (int b = 0; b < 5; ++b) {
        const int filters = std::max(1, widths[b] / divisor);
        for (int i = 0; i < blocks[b]; ++i) {
            spec.layers.push_back({LayerKind::Conv3x3, filters});
            spec.layers.push_back({LayerKind::Relu});
        }
        spec.layers.push_back({LayerKind::MaxPool});
    }
    append_head(spec, 1.0 / divisor);
    propagate_shapes(spec);
    return spec;
}

ModelSpec build_named(const std::string& name, std::array<int, 3> input_shape, int num_classes) {
    if (name.rfind("simple10", 0) == 0) {
        double scale = 1.0;
        if (const auto at = name.find('@'); at != std::string::npos)
            scale = std::stod(name.substr(at + 1));
        return build_simple10(input_shape, num_classes, scale);
    }
    if (name.rfind("vgg", 0) == 0) {
        int divisor = 1;
        if (const auto slash = name.find('/'); slash != std::string::npos)
            divisor = std::stoi(name.substr(slash + 1));
        return build_vgg16(divisor, input_shape, num_classes);
    }
    throw ConfigError("unknown architecture: " + name);
}

Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed) {
    propagate_shapes(spec);
    Parameters params;
    Rng rng(split_seed(seed, spec.hash()));
    std::array<int, 3> cur = spec.input_shape;
    bool flat = false;
    for (const auto& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv3x3: {
                const int fan_in = cur[0] * 9;
                const double limit = std::sqrt(6.0 / fan_in);
                Tensor w = Tensor::zeros({l.out_features, cur[0], 3, 3});
                for (double& v : w.data) v = rng.uniform(-limit, limit);
                params.tensors.push_back(std::move(w));
                params.tensors.push_back(Tensor::zeros({l.out_features}));
                cur[0] = l.out_features;
                break;
            }
            case LayerKind::Dense: {
                const int fan_in = cur[0];
                const double limit = std::sqrt(6.0 / fan_in);
                Tensor w = Tensor::zeros({fan_in, l.out_features});
                for (double& v : w.data) v = rng.uniform(-limit, limit);
                params.tensors.push_back(std::move(w));
                params.tensors.push_back(Tensor::zeros({l.out_features}));
                cur = {l.out_features, 1, 1};
                break;
            }
            case LayerKind::MaxPool:
                cur[1] /= 2;
                cur[2] /= 2;
                break;
            case LayerKind::Flatten:
                cur = {cur[0] * cur[1] * cur[2], 1, 1};
                flat = true;
                break;
            default:
                break;
        }
    }
    (void)flat;
    return params;
}

Tensor forward(const ModelSpec& spec, Parameters& params, const Tensor& batch, Tape* tape) {
    if (batch.rank() != 4 || batch.extent(1) != spec.input_shape[0] || batch.extent(2) != spec.input_shape[1] ||
        batch.extent(3) != spec.input_shape[2])
        throw ShapeError("forward: batch shape does not match model input");
    Tape local;
    Tape& t = tape ? *tape : local;
    if (tape)
        for (auto& p : params.tensors) t.leaf(p);

    Tensor x = batch;
    std::size_t pi = 0;
    for (const auto& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv3x3:
                x = t.conv2d(x, params.tensors[pi], 1, 1);
                x = t.add_channel_bias(x, params.tensors[pi + 1]);
                pi += 2;
                break;
            case LayerKind::Relu:
                x = t.relu(x);
                break;
            case LayerKind::MaxPool:
                x = t.maxpool2x2(x);
                break;
            case LayerKind::Flatten:
                x = t.flatten(x);
                break;
            case LayerKind::Dense:
                x = t.matmul(x, params.tensors[pi]);
                x = t.add_row_bias(x, params.tensors[pi + 1]);
                pi += 2;
                break;
            case LayerKind::SoftmaxHead:
                x = t.softmax(x);
                break;
        }
    }
    if (pi != params.tensors.size()) throw ShapeError("forward: parameter tensor count does not match spec");
    return x;
}

Tensor forward(const ModelSpec& spec, const Parameters& params, const Tensor& batch) {
    // No tape: drop stale node ids so no gradient bookkeeping happens.
    auto& mut = const_cast<Parameters&>(params);
    for (auto& t : mut.tensors) {
        t.node = -1;
        t.requires_grad = false;
    }
    return forward(spec, mut, batch, nullptr);
}

std::size_t parameter_count(const ModelSpec& spec) {
    const Parameters p = init_parameters(spec, 0);
    std::size_t n = 0;
    for (const auto& t : p.tensors) n += t.data.size();
    return n;
}

std::size_t conv_parameter_count(const ModelSpec& spec) {
    std::size_t n = 0;
    int cin = spec.input_shape[0];
    for (const auto& l : spec.layers) {
        if (l.kind == LayerKind::Conv3x3) {
            n += static_cast<std::size_t>(l.out_features) * cin * 9 + static_cast<std::size_t>(l.out_features);
            cin = l.out_features;
        }
    }
    return n;
}

namespace {

constexpr char kMagic[4] = {'K', 'D', 'L', 'P'};
constexpr std::uint16_t kVersion = 1;

struct ByteWriter {
    std::vector<unsigned char> buf;
    void u8(std::uint8_t v) { buf.push_back(v); }
    void u16(std::uint16_t v) { append_le(buf, v, 2); }
    void u32(std::uint32_t v) { append_le(buf, v, 4); }
    void u64(std::uint64_t v) { append_le(buf, v, 8); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
};

struct ByteReader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;
    std::uint64_t le(int bytes) {
        if (pos + static_cast<std::size_t>(bytes) > buf.size())
            throw TruncatedFileError("parameter file truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += static_cast<std::size_t>(bytes);
        return v;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace

void save_parameters(const Parameters& params, const ModelSpec& spec, const std::filesystem::path& path) {
    ByteWriter w;
    w.buf.insert(w.buf.end(), kMagic, kMagic + 4);
    w.u16(kVersion);
    w.u64(spec.hash());
    w.u32(static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& t : params.tensors) {
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (int e : t.shape) w.u32(static_cast<std::uint32_t>(e));
        for (double v : t.data) w.f64(v);
    }
    const std::uint64_t crc = Crc64::of(w.buf.data(), w.buf.size());
    w.u64(crc);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Parameters load_parameters(const ModelSpec& spec, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 4 + 2 + 8 + 4 + 8) throw TruncatedFileError("parameter file truncated: " + path.string());

    // Checksum gate first: the trailing CRC covers everything before it.
    const std::size_t body = buf.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(buf[body + static_cast<std::size_t>(i)]) << (8 * i);
    if (Crc64::of(buf.data(), body) != stored)
        throw ChecksumError("parameter file checksum mismatch: " + path.string());

    ByteReader r{buf};
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw SpecMismatchError("not a KDLP parameter file: " + path.string());
    r.pos = 4;
    if (r.u16() != kVersion) throw SpecMismatchError("unsupported KDLP version: " + path.string());
    if (r.u64() != spec.hash()) throw SpecMismatchError("parameter file was written for a different model spec");

    const Parameters ref = init_parameters(spec, 0);
    const std::uint32_t count = r.u32();
    if (count != ref.tensors.size()) throw SpecMismatchError("parameter tensor count does not match model spec");

    Parameters params;
    params.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const int rank = r.u8();
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
        if (shape != ref.tensors[i].shape) throw SpecMismatchError("parameter tensor shape does not match model spec");
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = r.f64();
        params.tensors.push_back(std::move(t));
    }
    if (r.pos != body) throw SpecMismatchError("parameter file has trailing data");
    return params;
}

}  // namespace kdlab
