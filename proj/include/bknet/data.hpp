#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bknet/rng.hpp"
#include "bknet/tensor.hpp"

namespace bknet {

struct Dataset {
    Tensor images;  // N x C x H x W, normalized
    std::vector<int> labels;

    int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
};

struct DataSplit {
    Dataset train;
    Dataset test;
    int num_classes = 0;
};

// Pinned synthetic task: 8x8x3 images, 3 classes defined by planted
// spatial templates plus Gaussian noise. Fully determined by the seed.
DataSplit synthetic_dataset(std::uint64_t seed, int train_count = 3000, int test_count = 600,
                            double noise = 0.6);

// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes
// (R, G, B planes of 32x32). Pixels are scaled to [0,1] then normalized
// per channel.
Dataset load_cifar10_binary(const std::vector<std::string>& paths,
                            const std::array<float, 3>& mean, const std::array<float, 3>& stddev);

// Raw IDX images (magic 0x00000803, u8 pixels) + IDX labels (0x00000801).
Dataset load_idx(const std::string& images_path, const std::string& labels_path, float mean,
                 float stddev);

// Training-time augmentation: random horizontal flip and a random crop
// from a 4-pixel zero padding. Returns the transformed copy of one sample.
void augment_sample(const Tensor& images, int index, Rng& rng, float* out);

// Assemble a batch (optionally augmented) from dataset rows.
Tensor gather_batch(const Dataset& data, const std::vector<int>& indices, std::size_t offset,
                    std::size_t count, bool augment, Rng& rng);

}  // namespace bknet
