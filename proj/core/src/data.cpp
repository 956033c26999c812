#include "kdlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "kdlab/crc64.hpp"
#include "kdlab/rng.hpp"

namespace kdlab {

namespace {

void equalize_tile(std::vector<std::uint8_t>& px, int height, int width, int c, int y0, int x0, int th, int tw) {
    int hist[256] = {0};
    const std::size_t plane = static_cast<std::size_t>(c) * height * width;
    for (int y = y0; y < y0 + th; ++y)
        for (int x = x0; x < x0 + tw; ++x)
            ++hist[px[plane + static_cast<std::size_t>(y) * width + x]];
    const int count = th * tw;
    int cdf[256];
    int acc = 0;
    for (int v = 0; v < 256; ++v) {
        acc += hist[v];
        cdf[v] = acc;
    }
    int cdf_min = 0;
    for (int v = 0; v < 256; ++v)
        if (cdf[v] > 0) {
            cdf_min = cdf[v];
            break;
        }
    if (count == cdf_min) return;  // all pixels equal: flat histogram, pass through
    std::uint8_t map[256];
    const double denom = static_cast<double>(count - cdf_min);
    for (int v = 0; v < 256; ++v) {
        const double m = (cdf[v] - cdf_min) / denom * 255.0;
        map[v] = static_cast<std::uint8_t>(std::lround(std::clamp(m, 0.0, 255.0)));
    }
    for (int y = y0; y < y0 + th; ++y)
        for (int x = x0; x < x0 + tw; ++x) {
            auto& p = px[plane + static_cast<std::size_t>(y) * width + x];
            p = map[p];
        }
}

}  // namespace

ImageSample local_hist_eq(const ImageSample& image, int tile) {
    if (tile < 2) throw ValueError("local_hist_eq: tile must be >= 2");
    ImageSample out = image;
    for (int c = 0; c < image.channels; ++c)
        for (int y0 = 0; y0 < image.height; y0 += tile)
            for (int x0 = 0; x0 < image.width; x0 += tile)
                equalize_tile(out.pixels, image.height, image.width, c, y0, x0,
                              std::min(tile, image.height - y0), std::min(tile, image.width - x0));
    return out;
}

ImageSample flip_rows(const ImageSample& image) {
    ImageSample out = image;
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, image.height - 1 - y, x);
    return out;
}

ImageSample flip_cols(const ImageSample& image) {
    ImageSample out = image;
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    return out;
}

std::vector<ImageSample> augment(const ImageSample& image, int tile) {
    const ImageSample eq = local_hist_eq(image, tile);
    std::vector<ImageSample> out;
    out.reserve(4);
    out.push_back(eq);
    out.push_back(flip_rows(eq));
    out.push_back(flip_cols(eq));
    out.push_back(flip_rows(flip_cols(eq)));
    return out;
}

namespace {

// Channel weights give 3-channel images a reddish cast; channel 0 carries
// the full pattern.
double channel_weight(int c) { return c == 0 ? 1.0 : (c == 1 ? 0.62 : 0.45); }

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)); }

struct DiscImage {
    ImageSample image;
    std::vector<std::pair<int, int>> blob_centers;
};

DiscImage make_disc_image(Rng& rng, int size, int channels, int blob_count) {
    ImageSample img;
    img.channels = channels;
    img.height = size;
    img.width = size;
    img.pixels.assign(static_cast<std::size_t>(channels) * size * size, 0);

    const double cx = size / 2.0 + rng.uniform(-size / 16.0, size / 16.0);
    const double cy = size / 2.0 + rng.uniform(-size / 16.0, size / 16.0);
    const double r0 = 0.38 * size + rng.uniform(-size / 32.0, size / 32.0);
    const int rb = std::max(2, size / 12);

    std::vector<std::pair<int, int>> centers;
    int tries = 0;
    while (static_cast<int>(centers.size()) < blob_count) {
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double rad = (r0 - rb - 1.5) * std::sqrt(rng.uniform());
        const int bx = static_cast<int>(std::lround(cx + rad * std::cos(ang)));
        const int by = static_cast<int>(std::lround(cy + rad * std::sin(ang)));
        // First pass insists on separation so the blob count is visually
        // unambiguous; after many rejects the spacing is relaxed.
        const double min_dist = tries < 500 ? 2.0 * rb + 2.0 : 2.0 * rb - 1.0;
        bool ok = true;
        for (const auto& [px, py] : centers)
            if (std::hypot(static_cast<double>(px - bx), static_cast<double>(py - by)) < min_dist) ok = false;
        if (ok)
            centers.emplace_back(bx, by);
        ++tries;
    }

    const double blob_value = rng.uniform(195.0, 230.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double d = std::hypot(x - cx, y - cy);
            double base = d <= r0 ? 95.0 : 25.0;
            for (const auto& [bx, by] : centers)
                if (std::hypot(static_cast<double>(x - bx), static_cast<double>(y - by)) <= rb) base = blob_value;
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = clamp_u8(base * channel_weight(c) + rng.uniform(-12.0, 12.0));
        }
    img.pixels.shrink_to_fit();
    return {std::move(img), std::move(centers)};
}

ImageSample make_texture_image(Rng& rng, int size, int channels, int pattern) {
    ImageSample img;
    img.channels = channels;
    img.height = size;
    img.width = size;
    img.pixels.assign(static_cast<std::size_t>(channels) * size * size, 0);
    const double freq = rng.uniform(0.25, 0.9);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double lo = rng.uniform(20.0, 60.0), hi = rng.uniform(150.0, 230.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double t = 0.0;
            switch (pattern % 4) {
                case 0:  // diagonal stripes
                    t = 0.5 + 0.5 * std::sin(freq * (x + y) + phase);
                    break;
                case 1:  // vertical stripes
                    t = 0.5 + 0.5 * std::sin(freq * 2.0 * x + phase);
                    break;
                case 2:  // checkerboard
                    t = ((static_cast<int>(x * freq) + static_cast<int>(y * freq)) % 2 == 0) ? 0.0 : 1.0;
                    break;
                default:  // radial rings
                    t = 0.5 + 0.5 * std::sin(freq * std::hypot(x - size / 2.0, y - size / 2.0) * 2.0 + phase);
                    break;
            }
            const double base = lo + (hi - lo) * t;
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = clamp_u8(base * (0.6 + 0.4 * channel_weight(c)) + rng.uniform(-10.0, 10.0));
        }
    return img;
}

ImageSample make_noise_image(Rng& rng, int size, int channels) {
    ImageSample img;
    img.channels = channels;
    img.height = size;
    img.width = size;
    img.pixels.assign(static_cast<std::size_t>(channels) * size * size, 0);
    const double gx = rng.uniform(-2.0, 2.0), gy = rng.uniform(-2.0, 2.0);
    const double base = rng.uniform(40.0, 180.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = clamp_u8(base + gx * x + gy * y + rng.uniform(-40.0, 40.0));
    return img;
}

}  // namespace

LabeledSet gen_target_set(int n, int num_classes, int size, std::uint64_t seed, int channels) {
    if (num_classes < 2) throw ValueError("gen_target_set: need >= 2 classes");
    if (n < num_classes * 10) throw ValueError("gen_target_set: need at least 10 samples per class");
    LabeledSet set;
    set.num_classes = num_classes;
    set.samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int label = i % num_classes;
        Rng rng(split_seed(seed, 0x7a6 + static_cast<std::uint64_t>(i)));
        auto disc = make_disc_image(rng, size, channels, label * kBlobsPerClass);
        disc.image.label = label;
        set.samples.push_back(std::move(disc.image));
    }
    return set;
}

std::vector<std::pair<int, int>> target_blob_centers(int n, int num_classes, int size, std::uint64_t seed,
                                                     int index) {
    if (index < 0 || index >= n) throw ValueError("target_blob_centers: index out of range");
    Rng rng(split_seed(seed, 0x7a6 + static_cast<std::uint64_t>(index)));
    return make_disc_image(rng, size, 3, (index % num_classes) * kBlobsPerClass).blob_centers;
}

LabeledSet gen_source_set(int n, int num_classes, int size, std::uint64_t seed, int channels) {
    if (num_classes < 2) throw ValueError("gen_source_set: need >= 2 classes");
    LabeledSet set;
    set.num_classes = num_classes;
    set.samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int label = i % num_classes;
        Rng rng(split_seed(seed, 0x50c + static_cast<std::uint64_t>(i)));
        ImageSample img = make_texture_image(rng, size, channels, label);
        img.label = label;
        set.samples.push_back(std::move(img));
    }
    return set;
}

UnlabeledSet gen_unlabeled_set(int m, int size, std::uint64_t seed, int channels) {
    UnlabeledSet set;
    set.samples.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        Rng rng(split_seed(seed, 0xd1 + static_cast<std::uint64_t>(i)));
        const int family = i % 10;
        ImageSample img;
        if (family < 4) {
            const int blobs = static_cast<int>(rng.uniform_int(9));
            img = make_disc_image(rng, size, channels, blobs).image;
        } else if (family < 7) {
            img = make_texture_image(rng, size, channels, static_cast<int>(rng.uniform_int(4)));
        } else {
            img = make_noise_image(rng, size, channels);
        }
        set.samples.push_back(std::move(img));
    }
    return set;
}

FoldPlan kfold(int n, int k, std::uint64_t seed) {
    if (k < 2) throw ValueError("kfold: k must be >= 2");
    if (n < k) throw ValueError("kfold: fewer samples than folds");
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(split_seed(seed, 0xf01d));
    rng.shuffle(perm);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) plan.assignments[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % k;
    return plan;
}

namespace {

constexpr char kMagic[4] = {'K', 'D', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagLabeled = 1;

void push_le(std::vector<unsigned char>& buf, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void check_uniform(const std::vector<ImageSample>& samples) {
    if (samples.empty()) throw ValueError("dataset: empty sample list");
    const auto& first = samples.front();
    for (const auto& s : samples)
        if (s.channels != first.channels || s.height != first.height || s.width != first.width)
            throw ShapeError("dataset: samples have mixed shapes");
}

void save_dataset_impl(const std::vector<ImageSample>& samples, int num_classes, bool labeled,
                       const std::filesystem::path& path) {
    check_uniform(samples);
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    push_le(buf, kVersion, 2);
    push_le(buf, labeled ? kFlagLabeled : 0, 2);
    push_le(buf, static_cast<std::uint64_t>(num_classes), 2);
    push_le(buf, static_cast<std::uint64_t>(samples.size()), 4);
    push_le(buf, static_cast<std::uint64_t>(samples.front().channels), 1);
    push_le(buf, static_cast<std::uint64_t>(samples.front().height), 2);
    push_le(buf, static_cast<std::uint64_t>(samples.front().width), 2);
    for (const auto& s : samples) {
        buf.insert(buf.end(), s.pixels.begin(), s.pixels.end());
        if (labeled) {
            if (!s.label) throw ValueError("dataset: labeled file requires labels on every sample");
            push_le(buf, static_cast<std::uint64_t>(*s.label), 2);
        } else if (s.label) {
            throw ValueError("dataset: unlabeled file cannot carry labels");
        }
    }
    push_le(buf, Crc64::of(buf.data(), buf.size()), 8);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<unsigned char> read_checked(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 4 + 2 + 2 + 2 + 4 + 1 + 2 + 2 + 8) throw TruncatedFileError("dataset file truncated: " + path.string());
    const std::size_t body = buf.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(buf[body + static_cast<std::size_t>(i)]) << (8 * i);
    if (Crc64::of(buf.data(), body) != stored) throw ChecksumError("dataset file checksum mismatch: " + path.string());
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw SpecMismatchError("not a KDDS dataset file: " + path.string());
    return buf;
}

struct DatasetHeader {
    std::uint16_t version, flags, num_classes;
    std::uint32_t count;
    int channels, height, width;
    std::size_t offset;  // first sample byte
};

DatasetHeader parse_header(const std::vector<unsigned char>& buf) {
    auto le = [&buf](std::size_t pos, int bytes) {
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[pos + static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    };
    DatasetHeader h{};
    h.version = static_cast<std::uint16_t>(le(4, 2));
    h.flags = static_cast<std::uint16_t>(le(6, 2));
    h.num_classes = static_cast<std::uint16_t>(le(8, 2));
    h.count = static_cast<std::uint32_t>(le(10, 4));
    h.channels = static_cast<int>(le(14, 1));
    h.height = static_cast<int>(le(15, 2));
    h.width = static_cast<int>(le(17, 2));
    h.offset = 19;
    if (h.version != kVersion) throw SpecMismatchError("unsupported KDDS version");
    return h;
}

std::vector<ImageSample> parse_samples(const std::vector<unsigned char>& buf, const DatasetHeader& h, bool labeled) {
    const std::size_t pixels = static_cast<std::size_t>(h.channels) * h.height * h.width;
    const std::size_t per = pixels + (labeled ? 2 : 0);
    const std::size_t body = buf.size() - 8;
    if (h.offset + per * h.count != body) throw TruncatedFileError("dataset file has wrong sample payload size");
    std::vector<ImageSample> out;
    out.reserve(h.count);
    std::size_t pos = h.offset;
    for (std::uint32_t i = 0; i < h.count; ++i) {
        ImageSample s;
        s.channels = h.channels;
        s.height = h.height;
        s.width = h.width;
        s.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + pixels));
        pos += pixels;
        if (labeled) {
            s.label = static_cast<int>(buf[pos]) | (static_cast<int>(buf[pos + 1]) << 8);
            pos += 2;
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

void save_dataset(const LabeledSet& set, const std::filesystem::path& path) {
    save_dataset_impl(set.samples, set.num_classes, true, path);
}

void save_dataset(const UnlabeledSet& set, const std::filesystem::path& path) {
    save_dataset_impl(set.samples, 0, false, path);
}

LabeledSet load_labeled(const std::filesystem::path& path) {
    const auto buf = read_checked(path);
    const auto h = parse_header(buf);
    if ((h.flags & kFlagLabeled) == 0) throw SpecMismatchError("expected a labeled dataset: " + path.string());
    LabeledSet set;
    set.num_classes = h.num_classes;
    set.samples = parse_samples(buf, h, true);
    for (const auto& s : set.samples)
        if (!s.label || *s.label < 0 || *s.label >= set.num_classes)
            throw SpecMismatchError("dataset label out of range: " + path.string());
    return set;
}

UnlabeledSet load_unlabeled(const std::filesystem::path& path) {
    const auto buf = read_checked(path);
    const auto h = parse_header(buf);
    if ((h.flags & kFlagLabeled) != 0) throw SpecMismatchError("expected an unlabeled dataset: " + path.string());
    UnlabeledSet set;
    set.samples = parse_samples(buf, h, false);
    return set;
}

std::uint64_t dataset_file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 8) throw TruncatedFileError("dataset file too short: " + path.string());
    // Checksum of the content, excluding the trailing CRC itself: hashing
    // the whole file would give the same CRC residue for every valid file.
    return Crc64::of(buf.data(), buf.size() - 8);
}

Tensor to_batch(std::span<const ImageSample> samples) {
    if (samples.empty()) throw ValueError("to_batch: empty sample list");
    const auto& first = samples.front();
    Tensor batch = Tensor::zeros({static_cast<int>(samples.size()), first.channels, first.height, first.width});
    const std::size_t per = first.pixels.size();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].pixels.size() != per) throw ShapeError("to_batch: samples have mixed shapes");
        for (std::size_t j = 0; j < per; ++j)
            batch.data[i * per + j] = static_cast<double>(samples[i].pixels[j]) / 255.0;
    }
    return batch;
}

std::vector<int> labels_of(std::span<const ImageSample> samples) {
    std::vector<int> labels;
    labels.reserve(samples.size());
    for (const auto& s : samples) {
        if (!s.label) throw ValueError("labels_of: sample has no label");
        labels.push_back(*s.label);
    }
    return labels;
}

}  // namespace kdlab
