#include "bknet/data.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bknet {

namespace {

// Three 8x8 templates: horizontal bar, vertical bar, diagonal cross.
float template_value(int cls, int y, int x) {
    switch (cls) {
        case 0: return (y == 3 || y == 4) ? 1.0f : 0.0f;
        case 1: return (x == 3 || x == 4) ? 1.0f : 0.0f;
        default: return (y == x || y == 7 - x) ? 1.0f : 0.0f;
    }
}

Dataset synthesize(int count, Rng& rng, double noise) {
    Dataset out;
    out.images = Tensor({count, 3, 8, 8});
    out.labels.resize(std::size_t(count));
    const float channel_gain[3] = {1.0f, 0.8f, 0.6f};
    for (int i = 0; i < count; ++i) {
        const int cls = i % 3;
        out.labels[std::size_t(i)] = cls;
        const float amp = float(rng.uniform(0.8, 1.2));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    out.images.at(i, c, y, x) =
                        amp * channel_gain[c] * template_value(cls, y, x) +
                        float(rng.gaussian(0.0, noise));
    }
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset file '" + path + "'");
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 |
           std::uint32_t(p[3]);
}

}  // namespace

DataSplit synthetic_dataset(std::uint64_t seed, int train_count, int test_count, double noise) {
    DataSplit split;
    split.num_classes = 3;
    Rng train_rng(derive_seed(seed, "synthetic-train"));
    Rng test_rng(derive_seed(seed, "synthetic-test"));
    split.train = synthesize(train_count, train_rng, noise);
    split.test = synthesize(test_count, test_rng, noise);
    return split;
}

Dataset load_cifar10_binary(const std::vector<std::string>& paths,
                            const std::array<float, 3>& mean, const std::array<float, 3>& stddev) {
    constexpr int kRecord = 3073;
    std::vector<std::uint8_t> all;
    for (const auto& p : paths) {
        auto bytes = read_file_bytes(p);
        if (bytes.size() % kRecord != 0)
            throw std::runtime_error("'" + p + "' is not a CIFAR-10 binary batch (size " +
                                     std::to_string(bytes.size()) + ")");
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    const int n = int(all.size() / kRecord);
    Dataset out;
    out.images = Tensor({n, 3, 32, 32});
    out.labels.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        const std::uint8_t* rec = &all[std::size_t(i) * kRecord];
        out.labels[std::size_t(i)] = rec[0];
        for (int c = 0; c < 3; ++c)
            for (int p = 0; p < 1024; ++p) {
                const float v = float(rec[1 + c * 1024 + p]) / 255.0f;
                out.images.data[((std::size_t(i) * 3 + c) * 1024) + std::size_t(p)] =
                    (v - mean[std::size_t(c)]) / stddev[std::size_t(c)];
            }
    }
    return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, float mean,
                 float stddev) {
    auto img_bytes = read_file_bytes(images_path);
    auto lbl_bytes = read_file_bytes(labels_path);
    if (img_bytes.size() < 16 || read_be32(img_bytes.data()) != 0x00000803u)
        throw std::runtime_error("'" + images_path + "' is not an IDX3 image file");
    if (lbl_bytes.size() < 8 || read_be32(lbl_bytes.data()) != 0x00000801u)
        throw std::runtime_error("'" + labels_path + "' is not an IDX1 label file");
    const int n = int(read_be32(&img_bytes[4]));
    const int h = int(read_be32(&img_bytes[8]));
    const int w = int(read_be32(&img_bytes[12]));
    if (int(read_be32(&lbl_bytes[4])) != n)
        throw std::runtime_error("IDX image/label counts disagree");
    if (img_bytes.size() != 16 + std::size_t(n) * h * w)
        throw std::runtime_error("IDX image payload truncated");

    Dataset out;
    out.images = Tensor({n, 1, h, w});
    out.labels.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        out.labels[std::size_t(i)] = lbl_bytes[8 + std::size_t(i)];
        for (int p = 0; p < h * w; ++p)
            out.images.data[std::size_t(i) * h * w + std::size_t(p)] =
                (float(img_bytes[16 + std::size_t(i) * h * w + std::size_t(p)]) / 255.0f - mean) /
                stddev;
    }
    return out;
}

void augment_sample(const Tensor& images, int index, Rng& rng, float* out) {
    const int c = images.shape[1], h = images.shape[2], w = images.shape[3];
    const bool flip = rng.uniform() < 0.5;
    constexpr int kPad = 4;
    const int oy = int(rng.below(std::uint64_t(2 * kPad + 1))) - kPad;
    const int ox = int(rng.below(std::uint64_t(2 * kPad + 1))) - kPad;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int sx = flip ? w - 1 - x : x;
                const int iy = y + oy, ix = sx + ox;
                float v = 0.0f;
                if (iy >= 0 && iy < h && ix >= 0 && ix < w) v = images.at(index, ch, iy, ix);
                out[(std::size_t(ch) * h + y) * w + x] = v;
            }
}

Tensor gather_batch(const Dataset& data, const std::vector<int>& indices, std::size_t offset,
                    std::size_t count, bool augment, Rng& rng) {
    const int c = data.images.shape[1], h = data.images.shape[2], w = data.images.shape[3];
    Tensor batch({int(count), c, h, w});
    const std::size_t sample = std::size_t(c) * h * w;
    for (std::size_t i = 0; i < count; ++i) {
        const int idx = indices[offset + i];
        float* dst = &batch.data[i * sample];
        if (augment) {
            augment_sample(data.images, idx, rng, dst);
        } else {
            std::memcpy(dst, &data.images.data[std::size_t(idx) * sample], sample * sizeof(float));
        }
    }
    return batch;
}

}  // namespace bknet
