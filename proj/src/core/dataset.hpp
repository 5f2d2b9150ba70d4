#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/image.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace masknet {

// Class indices for the mask task. WithMask is the positive class for
// precision/recall everywhere in this codebase.
enum MaskLabel : int { kWithMask = 0, kWithoutMask = 1 };

struct LabeledItem {
    Image image;
    int label = 0;
    std::string path;  // source file; empty for synthetic items
};

struct LabeledDataset {
    std::vector<LabeledItem> items;
    std::vector<std::string> class_names;

    std::vector<int64_t> class_counts() const;
};

// Expects root/with_mask/*.ppm and root/without_mask/*.ppm, enumerated in
// lexicographic filename order. Errors name the offending file or folder.
LabeledDataset load_class_folders(const std::string& root);

// Stratified: each class is shuffled (seeded) and split independently,
// floor(train_fraction * n) items to train, the rest to validation.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset,
                                                double train_fraction, uint64_t seed);

// Face-like fixtures: skin ellipse with eyes on a noisy background; the
// WithMask class adds a contrasting rectangle over the lower face. Labels
// alternate WithMask/WithoutMask; every item is fully determined by seed.
LabeledDataset synth_mask_dataset(int n_per_class, int resolution, uint64_t seed);

// Three-class shape task (circle/square/triangle) used as the pretraining
// task for the transfer-learning story.
LabeledDataset synth_shapes_dataset(int n_per_class, int resolution, uint64_t seed);

// Resize (when needed) + normalize, shared by batching and crop
// classification.
Tensor to_model_input(const Image& img, int resolution);

// Epoch iterator: emits (N,3,R,R) batches with the final partial batch
// included; shuffle order is seeded and deterministic.
class BatchStream {
public:
    BatchStream(const LabeledDataset& dataset, int batch_size, bool shuffle, uint64_t seed,
                int resolution);

    // Fills the next batch; returns false when the epoch is exhausted.
    bool next(Tensor& images, std::vector<int>& labels);
    int64_t batch_count() const;

private:
    const LabeledDataset* dataset_;
    std::vector<size_t> order_;
    size_t pos_ = 0;
    int batch_size_;
    int resolution_;
};

} // namespace masknet
