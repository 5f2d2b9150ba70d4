#include "core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "core/error.hpp"

namespace fs = std::filesystem;

namespace masknet {

std::vector<int64_t> LabeledDataset::class_counts() const {
    std::vector<int64_t> counts(class_names.size(), 0);
    for (const auto& item : items) {
        if (item.label < 0 || item.label >= static_cast<int>(counts.size()))
            fail(ErrorCode::data, "dataset item has label " + std::to_string(item.label) +
                                      " outside " + std::to_string(counts.size()) + " classes");
        ++counts[static_cast<size_t>(item.label)];
    }
    return counts;
}

LabeledDataset load_class_folders(const std::string& root) {
    LabeledDataset d;
    d.class_names = {"with_mask", "without_mask"};
    for (int label = 0; label < 2; ++label) {
        const fs::path dir = fs::path(root) / d.class_names[static_cast<size_t>(label)];
        std::error_code ec;
        if (!fs::is_directory(dir, ec))
            fail(ErrorCode::data, "missing class folder '" + dir.string() + "'");
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".ppm")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
        if (files.empty())
            fail(ErrorCode::data, "class folder '" + dir.string() + "' has no .ppm files");
        for (const auto& file : files) {
            LabeledItem item;
            try {
                item.image = load_ppm(file.string());
            } catch (const Error& e) {
                fail(e.code(), "'" + file.string() + "': " + e.what());
            }
            item.label = label;
            item.path = file.string();
            d.items.push_back(std::move(item));
        }
    }
    return d;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset,
                                                double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        fail(ErrorCode::invalid_argument, "train_fraction must be in (0,1), got " +
                                              std::to_string(train_fraction));
    LabeledDataset train, val;
    train.class_names = dataset.class_names;
    val.class_names = dataset.class_names;
    const size_t num_classes = dataset.class_names.size();
    for (size_t cls = 0; cls < num_classes; ++cls) {
        std::vector<size_t> indices;
        for (size_t i = 0; i < dataset.items.size(); ++i)
            if (dataset.items[i].label == static_cast<int>(cls)) indices.push_back(i);
        if (indices.size() < 2)
            fail(ErrorCode::data, "class '" + dataset.class_names[cls] + "' has " +
                                      std::to_string(indices.size()) +
                                      " items; need >= 2 to split");
        Rng rng(derive_seed(seed, cls));
        for (size_t i = indices.size() - 1; i > 0; --i) {
            const size_t j = static_cast<size_t>(rng.next_below(i + 1));
            std::swap(indices[i], indices[j]);
        }
        const size_t n_train = static_cast<size_t>(
            std::floor(train_fraction * static_cast<double>(indices.size())));
        for (size_t k = 0; k < indices.size(); ++k) {
            auto& dst = k < n_train ? train : val;
            dst.items.push_back(dataset.items[indices[k]]);
        }
    }
    return {std::move(train), std::move(val)};
}

namespace {

void fill_rect(Image& img, int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width);
    y1 = std::min(y1, img.height);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            uint8_t* p = img.px(x, y);
            p[0] = r;
            p[1] = g;
            p[2] = b;
        }
}

void fill_ellipse(Image& img, double cx, double cy, double ax, double ay, uint8_t r,
                  uint8_t g, uint8_t b) {
    const int x0 = std::max(0, static_cast<int>(cx - ax));
    const int x1 = std::min(img.width, static_cast<int>(cx + ax) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - ay));
    const int y1 = std::min(img.height, static_cast<int>(cy + ay) + 1);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double dx = (x - cx) / ax;
            const double dy = (y - cy) / ay;
            if (dx * dx + dy * dy <= 1.0) {
                uint8_t* p = img.px(x, y);
                p[0] = r;
                p[1] = g;
                p[2] = b;
            }
        }
}

// Adds per-channel speckle inside an ellipse; the texture reads as stubble /
// skin grain and survives every normalization layer as activation energy,
// unlike a plain color shift. Channel-independent draws give the noise a
// broadband spectrum in color space too, so filters of every kind respond.
void speckle_ellipse(Image& img, double cx, double cy, double ax, double ay, int amp,
                     Rng& rng) {
    const int x0 = std::max(0, static_cast<int>(cx - ax));
    const int x1 = std::min(img.width, static_cast<int>(cx + ax) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - ay));
    const int y1 = std::min(img.height, static_cast<int>(cy + ay) + 1);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double dx = (x - cx) / ax;
            const double dy = (y - cy) / ay;
            if (dx * dx + dy * dy > 1.0) continue;
            uint8_t* p = img.px(x, y);
            for (int c = 0; c < 3; ++c)
                p[c] = static_cast<uint8_t>(
                    std::clamp(static_cast<int>(p[c]) + rng.uniform_int(-amp, amp), 0, 255));
        }
}

void fill_noise_background(Image& img, Rng& rng) {
    // near-flat gray: just enough grain to avoid a synthetic-looking solid
    // fill while keeping the background's texture energy far below the
    // class cue's
    const int base = rng.uniform_int(118, 132);
    for (size_t i = 0; i < img.pixels.size(); i += 3) {
        const int v = std::clamp(base + rng.uniform_int(-3, 3), 0, 255);
        img.pixels[i] = static_cast<uint8_t>(v);
        img.pixels[i + 1] = static_cast<uint8_t>(v);
        img.pixels[i + 2] = static_cast<uint8_t>(v);
    }
}

Image synth_face(int resolution, bool with_mask, Rng& rng) {
    Image img = make_image(resolution, resolution);
    fill_noise_background(img, rng);

    const double w = resolution, h = resolution;
    const double cx = w * 0.5 + rng.uniform(-0.01f, 0.01f) * w;
    const double cy = h * 0.5 + rng.uniform(-0.01f, 0.01f) * h;
    const double ax = w * (0.37 + 0.02 * rng.next_double());
    const double ay = h * (0.43 + 0.02 * rng.next_double());

    const uint8_t skin_r = static_cast<uint8_t>(rng.uniform_int(205, 215));
    const uint8_t skin_g = static_cast<uint8_t>(rng.uniform_int(145, 155));
    const uint8_t skin_b = static_cast<uint8_t>(rng.uniform_int(105, 115));
    fill_ellipse(img, cx, cy, ax, ay, skin_r, skin_g, skin_b);

    const uint8_t eye = static_cast<uint8_t>(rng.uniform_int(25, 50));
    const double eye_r = std::max(1.0, w / 24.0);
    const double eye_y = cy - ay * 0.35;
    fill_ellipse(img, cx - ax * 0.45, eye_y, eye_r, eye_r, eye, eye, eye);
    fill_ellipse(img, cx + ax * 0.45, eye_y, eye_r, eye_r, eye, eye, eye);

    if (with_mask) {
        // dark cool-toned mask over the whole lower face: the only
        // blue-dominant element either class ever draws, and much darker
        // than the skin it replaces, so the cue survives global pooling in
        // both hue and luminance
        const uint8_t mask_r = static_cast<uint8_t>(rng.uniform_int(30, 40));
        const uint8_t mask_g = static_cast<uint8_t>(rng.uniform_int(75, 90));
        const uint8_t mask_b = static_cast<uint8_t>(rng.uniform_int(180, 195));
        const double half_w = ax * (1.04 + 0.02 * rng.next_double());
        const double top = cy - ay * 0.05;
        const double bottom = cy + ay * (0.99 + 0.02 * rng.next_double());
        fill_rect(img, static_cast<int>(cx - half_w), static_cast<int>(top),
                  static_cast<int>(cx + half_w), static_cast<int>(bottom), mask_r, mask_g,
                  mask_b);
    } else {
        // bare lower face: heavy skin grain where the mask would sit, plus a
        // warm mouth; the grain gives this class high-frequency energy the
        // flat fabric never has
        speckle_ellipse(img, cx, cy + ay * 0.45, ax * 1.06, ay * 0.58, 120, rng);
        const uint8_t lip_r = static_cast<uint8_t>(rng.uniform_int(185, 195));
        const uint8_t lip_gb = static_cast<uint8_t>(rng.uniform_int(40, 50));
        const double mouth_y = cy + ay * 0.45;
        const double half_h = std::max(1.0, h / 10.0);
        fill_rect(img, static_cast<int>(cx - ax * 0.55),
                  static_cast<int>(mouth_y - half_h), static_cast<int>(cx + ax * 0.55),
                  static_cast<int>(mouth_y + half_h), lip_r, lip_gb, lip_gb);
    }
    return img;
}

} // namespace

LabeledDataset synth_mask_dataset(int n_per_class, int resolution, uint64_t seed) {
    if (n_per_class < 1)
        fail(ErrorCode::invalid_argument, "n_per_class must be >= 1");
    if (resolution < 8)
        fail(ErrorCode::invalid_argument, "synthetic resolution must be >= 8");
    LabeledDataset d;
    d.class_names = {"with_mask", "without_mask"};
    d.items.reserve(static_cast<size_t>(2) * n_per_class);
    for (int i = 0; i < 2 * n_per_class; ++i) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
        const int label = i % 2;  // alternates WithMask, WithoutMask
        LabeledItem item;
        item.image = synth_face(resolution, label == kWithMask, rng);
        item.label = label;
        d.items.push_back(std::move(item));
    }
    return d;
}

LabeledDataset synth_shapes_dataset(int n_per_class, int resolution, uint64_t seed) {
    if (n_per_class < 1)
        fail(ErrorCode::invalid_argument, "n_per_class must be >= 1");
    if (resolution < 8)
        fail(ErrorCode::invalid_argument, "synthetic resolution must be >= 8");
    LabeledDataset d;
    d.class_names = {"circle", "square", "triangle"};
    d.items.reserve(static_cast<size_t>(3) * n_per_class);
    for (int i = 0; i < 3 * n_per_class; ++i) {
        Rng rng(derive_seed(seed ^ 0x5348504553ULL, static_cast<uint64_t>(i)));
        const int label = i % 3;
        Image img = make_image(resolution, resolution);
        fill_noise_background(img, rng);
        const double cx = resolution * (0.35 + 0.3 * rng.next_double());
        const double cy = resolution * (0.35 + 0.3 * rng.next_double());
        const double rad = resolution * (0.15 + 0.15 * rng.next_double());
        const uint8_t r = static_cast<uint8_t>(rng.uniform_int(0, 255));
        const uint8_t g = static_cast<uint8_t>(rng.uniform_int(0, 255));
        const uint8_t b = static_cast<uint8_t>(rng.uniform_int(0, 255));
        if (label == 0) {
            fill_ellipse(img, cx, cy, rad, rad, r, g, b);
        } else if (label == 1) {
            fill_rect(img, static_cast<int>(cx - rad), static_cast<int>(cy - rad),
                      static_cast<int>(cx + rad), static_cast<int>(cy + rad), r, g, b);
        } else {
            const int y0 = static_cast<int>(cy - rad);
            const int y1 = static_cast<int>(cy + rad);
            for (int y = std::max(0, y0); y < std::min(resolution, y1); ++y) {
                const double t = y1 > y0 ? static_cast<double>(y - y0) / (y1 - y0) : 0.0;
                const int half = static_cast<int>(rad * t);
                fill_rect(img, static_cast<int>(cx) - half, y, static_cast<int>(cx) + half + 1,
                          y + 1, r, g, b);
            }
        }
        LabeledItem item;
        item.image = std::move(img);
        item.label = label;
        d.items.push_back(std::move(item));
    }
    return d;
}

Tensor to_model_input(const Image& img, int resolution) {
    if (img.width == resolution && img.height == resolution) return normalize(img);
    return normalize(resize_bilinear(img, resolution, resolution));
}

BatchStream::BatchStream(const LabeledDataset& dataset, int batch_size, bool shuffle,
                         uint64_t seed, int resolution)
    : dataset_(&dataset), batch_size_(batch_size), resolution_(resolution) {
    if (batch_size < 1) fail(ErrorCode::invalid_argument, "batch_size must be >= 1");
    if (resolution < 1) fail(ErrorCode::invalid_argument, "resolution must be >= 1");
    order_.resize(dataset.items.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffle && order_.size() > 1) {
        Rng rng(seed);
        for (size_t i = order_.size() - 1; i > 0; --i) {
            const size_t j = static_cast<size_t>(rng.next_below(i + 1));
            std::swap(order_[i], order_[j]);
        }
    }
}

int64_t BatchStream::batch_count() const {
    const int64_t n = static_cast<int64_t>(order_.size());
    return (n + batch_size_ - 1) / batch_size_;
}

bool BatchStream::next(Tensor& images, std::vector<int>& labels) {
    if (pos_ >= order_.size()) return false;
    const size_t n = std::min(static_cast<size_t>(batch_size_), order_.size() - pos_);
    images = Tensor(Shape4{static_cast<int64_t>(n), 3, resolution_, resolution_});
    labels.resize(n);
    const int64_t per_item = static_cast<int64_t>(3) * resolution_ * resolution_;
    for (size_t k = 0; k < n; ++k) {
        const LabeledItem& item = dataset_->items[order_[pos_ + k]];
        const Tensor one = to_model_input(item.image, resolution_);
        std::copy(one.data(), one.data() + per_item,
                  images.data() + static_cast<int64_t>(k) * per_item);
        labels[k] = item.label;
    }
    pos_ += n;
    return true;
}

} // namespace masknet
