#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/error.hpp"
#include "core/image.hpp"

using namespace masknet;
namespace fs = std::filesystem;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error to be thrown");
    return ErrorCode::invalid_argument;
}

// Scratch directory per test, removed on destruction.
struct TempTree {
    fs::path root;
    explicit TempTree(const std::string& name)
        : root(fs::temp_directory_path() / ("masknet_dataset_" + name)) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
    std::string str() const { return root.string(); }
};

void write_fixture(const fs::path& path, uint8_t shade) {
    save_ppm(make_image(4, 4, shade, shade, shade), path.string());
}

// Synthetic in-memory dataset: single-pixel images whose value encodes the
// item index, so batch order and content are recoverable after normalize.
LabeledDataset indexed_dataset(int n_class0, int n_class1) {
    LabeledDataset ds;
    ds.class_names = {"with_mask", "without_mask"};
    for (int i = 0; i < n_class0 + n_class1; ++i) {
        LabeledItem item;
        const auto v = static_cast<uint8_t>(i);
        item.image = make_image(1, 1, v, v, v);
        item.label = i < n_class0 ? kWithMask : kWithoutMask;
        ds.items.push_back(std::move(item));
    }
    return ds;
}

int decode_index(const Tensor& batch, int64_t n) {
    return static_cast<int>(std::lround((static_cast<double>(batch.at(n, 0, 0, 0)) + 1.0) * 127.5));
}

double lower_half_variance(const Image& im) {
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (int y = im.height / 2; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) {
            const uint8_t* p = im.px(x, y);
            const double g = (p[0] + p[1] + p[2]) / 3.0;
            sum += g;
            sum2 += g * g;
            ++n;
        }
    const double mean = sum / n;
    return sum2 / n - mean * mean;
}

} // namespace

TEST_CASE("load_class_folders enumerates a 3+5 fixture in lexicographic order") {
    TempTree tree("fixture35");
    fs::create_directories(tree.root / "with_mask");
    fs::create_directories(tree.root / "without_mask");
    for (const char* name : {"b.ppm", "a.ppm", "c.ppm"})
        write_fixture(tree.root / "with_mask" / name, 10);
    for (const char* name : {"e.ppm", "d.ppm", "g.ppm", "f.ppm", "h.ppm"})
        write_fixture(tree.root / "without_mask" / name, 200);

    LabeledDataset ds = load_class_folders(tree.str());
    REQUIRE(ds.items.size() == 8);
    CHECK(ds.class_names == std::vector<std::string>{"with_mask", "without_mask"});
    CHECK(ds.class_counts() == std::vector<int64_t>{3, 5});

    std::vector<std::string> mask_files, nomask_files;
    for (const auto& item : ds.items) {
        const std::string file = fs::path(item.path).filename().string();
        (item.label == kWithMask ? mask_files : nomask_files).push_back(file);
        CHECK(item.image.width == 4);
    }
    CHECK(mask_files == std::vector<std::string>{"a.ppm", "b.ppm", "c.ppm"});
    CHECK(nomask_files == std::vector<std::string>{"d.ppm", "e.ppm", "f.ppm", "g.ppm", "h.ppm"});
}

TEST_CASE("load_class_folders error contract") {
    SUBCASE("missing class folder") {
        TempTree tree("missing_folder");
        fs::create_directories(tree.root / "with_mask");
        write_fixture(tree.root / "with_mask" / "a.ppm", 1);
        CHECK(code_of([&] { load_class_folders(tree.str()); }) == ErrorCode::data);
    }
    SUBCASE("empty with_mask folder") {
        TempTree tree("empty_folder");
        fs::create_directories(tree.root / "with_mask");
        fs::create_directories(tree.root / "without_mask");
        write_fixture(tree.root / "without_mask" / "a.ppm", 1);
        CHECK(code_of([&] { load_class_folders(tree.str()); }) == ErrorCode::data);
    }
    SUBCASE("undecodable file is named in the error") {
        TempTree tree("bad_file");
        fs::create_directories(tree.root / "with_mask");
        fs::create_directories(tree.root / "without_mask");
        write_fixture(tree.root / "with_mask" / "a.ppm", 1);
        {
            std::ofstream f((tree.root / "without_mask" / "junk.ppm").string());
            f << "this is not a ppm";
        }
        try {
            load_class_folders(tree.str());
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("junk.ppm") != std::string::npos);
        }
    }
}

TEST_CASE("split 10+10 at 0.8 gives a disjoint 8+8 / 2+2 partition") {
    LabeledDataset ds = indexed_dataset(10, 10);
    auto [train, val] = split(ds, 0.8, 5);
    CHECK(train.class_counts() == std::vector<int64_t>{8, 8});
    CHECK(val.class_counts() == std::vector<int64_t>{2, 2});
    CHECK(train.class_names == ds.class_names);

    std::set<int> seen;
    for (const auto& item : train.items) seen.insert(item.image.px(0, 0)[0]);
    for (const auto& item : val.items) seen.insert(item.image.px(0, 0)[0]);
    CHECK(seen.size() == 20);  // disjoint and exhaustive
}

TEST_CASE("split is seed-deterministic and seed-sensitive") {
    LabeledDataset ds = indexed_dataset(12, 12);
    auto [t1, v1] = split(ds, 0.75, 9);
    auto [t2, v2] = split(ds, 0.75, 9);
    auto [t3, v3] = split(ds, 0.75, 10);

    auto ids = [](const LabeledDataset& d) {
        std::vector<int> out;
        for (const auto& item : d.items) out.push_back(item.image.px(0, 0)[0]);
        return out;
    };
    CHECK(ids(t1) == ids(t2));
    CHECK(ids(v1) == ids(v2));
    CHECK(ids(t1) != ids(t3));
}

TEST_CASE("paper-shaped 993/1918 corpus splits to 794+1534 / 199+384 at 0.8") {
    LabeledDataset ds = indexed_dataset(993, 1918);
    CHECK(ds.class_counts() == std::vector<int64_t>{993, 1918});
    const double imbalance = 993.0 / 1918.0;
    CHECK(imbalance == doctest::Approx(0.518).epsilon(1e-3));

    auto [train, val] = split(ds, 0.8, 1);
    CHECK(train.class_counts() == std::vector<int64_t>{794, 1534});
    CHECK(val.class_counts() == std::vector<int64_t>{199, 384});
}

TEST_CASE("split rejects bad fractions and too-small classes") {
    LabeledDataset ds = indexed_dataset(10, 10);
    CHECK(code_of([&] { split(ds, 0.0, 1); }) == ErrorCode::invalid_argument);
    CHECK(code_of([&] { split(ds, 1.0, 1); }) == ErrorCode::invalid_argument);
    LabeledDataset tiny = indexed_dataset(1, 10);
    CHECK(code_of([&] { split(tiny, 0.8, 1); }) == ErrorCode::data);
}

TEST_CASE("synth_mask_dataset: counts, determinism, and resolution") {
    LabeledDataset a = synth_mask_dataset(300, 64, 7);
    REQUIRE(a.items.size() == 600);
    CHECK(a.class_counts() == std::vector<int64_t>{300, 300});
    for (const auto& item : a.items) {
        CHECK(item.image.width == 64);
        CHECK(item.image.height == 64);
    }

    LabeledDataset b = synth_mask_dataset(300, 64, 7);
    bool identical = true;
    for (size_t i = 0; i < a.items.size(); ++i)
        if (!(a.items[i].image == b.items[i].image) || a.items[i].label != b.items[i].label)
            identical = false;
    CHECK(identical);

    LabeledDataset c = synth_mask_dataset(300, 64, 8);
    bool differs = false;
    for (size_t i = 0; i < a.items.size(); ++i)
        if (!(a.items[i].image == c.items[i].image)) differs = true;
    CHECK(differs);
}

TEST_CASE("synth_mask_dataset classes are separable by lower-half variance") {
    // The flat mask rectangle suppresses texture over the lower face, so the
    // WithMask class has the lower statistic; measured ratios run 0.55-0.86.
    for (uint64_t seed : {1ull, 7ull, 99ull}) {
        LabeledDataset ds = synth_mask_dataset(100, 64, seed);
        double var_sum[2] = {0.0, 0.0};
        int count[2] = {0, 0};
        for (const auto& item : ds.items) {
            var_sum[item.label] += lower_half_variance(item.image);
            count[item.label] += 1;
        }
        const double with_mask = var_sum[kWithMask] / count[kWithMask];
        const double without_mask = var_sum[kWithoutMask] / count[kWithoutMask];
        CHECK(with_mask < 0.95 * without_mask);
        if (seed == 7) CHECK(with_mask / without_mask < 0.9);
    }
}

TEST_CASE("synth_shapes_dataset provides a deterministic 3-class pretraining task") {
    LabeledDataset a = synth_shapes_dataset(50, 64, 3);
    REQUIRE(a.items.size() == 150);
    CHECK(a.class_names.size() == 3);
    CHECK(a.class_counts() == std::vector<int64_t>{50, 50, 50});
    LabeledDataset b = synth_shapes_dataset(50, 64, 3);
    bool identical = true;
    for (size_t i = 0; i < a.items.size(); ++i)
        if (!(a.items[i].image == b.items[i].image)) identical = false;
    CHECK(identical);
}

TEST_CASE("synthetic generators validate their arguments") {
    CHECK(code_of([] { synth_mask_dataset(0, 64, 1); }) == ErrorCode::invalid_argument);
    CHECK(code_of([] { synth_mask_dataset(10, 4, 1); }) == ErrorCode::invalid_argument);
}

TEST_CASE("batches: 70 items at batch 32 emit 32, 32, 6") {
    LabeledDataset ds = indexed_dataset(35, 35);
    BatchStream stream(ds, 32, false, 0, 8);
    CHECK(stream.batch_count() == 3);

    Tensor images;
    std::vector<int> labels;
    std::vector<int64_t> sizes;
    while (stream.next(images, labels)) {
        REQUIRE(images.shape().c == 3);
        REQUIRE(images.shape().h == 8);
        REQUIRE(images.shape().w == 8);
        CHECK(images.shape().n == static_cast<int64_t>(labels.size()));
        sizes.push_back(images.shape().n);
    }
    CHECK(sizes == std::vector<int64_t>{32, 32, 6});
}

TEST_CASE("batches with shuffle=false preserve dataset order") {
    LabeledDataset ds = indexed_dataset(5, 5);
    BatchStream stream(ds, 4, false, 0, 8);
    Tensor images;
    std::vector<int> labels;
    std::vector<int> order;
    while (stream.next(images, labels))
        for (int64_t n = 0; n < images.shape().n; ++n) order.push_back(decode_index(images, n));
    CHECK(order == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("shuffled epochs: seeded, permutation differs by seed, multiset preserved") {
    LabeledDataset ds = indexed_dataset(20, 20);
    auto epoch_order = [&](uint64_t seed) {
        BatchStream stream(ds, 7, true, seed, 8);
        Tensor images;
        std::vector<int> labels;
        std::vector<int> order;
        while (stream.next(images, labels))
            for (int64_t n = 0; n < images.shape().n; ++n)
                order.push_back(decode_index(images, n));
        return order;
    };

    std::vector<int> s1 = epoch_order(5);
    std::vector<int> s1_again = epoch_order(5);
    std::vector<int> s2 = epoch_order(6);
    CHECK(s1 == s1_again);
    CHECK(s1 != s2);

    std::vector<int> expect(40);
    for (int i = 0; i < 40; ++i) expect[i] = i;
    std::vector<int> sorted1 = s1, sorted2 = s2;
    std::sort(sorted1.begin(), sorted1.end());
    std::sort(sorted2.begin(), sorted2.end());
    CHECK(sorted1 == expect);
    CHECK(sorted2 == expect);
}

TEST_CASE("batch labels travel with their images through the shuffle") {
    LabeledDataset ds = indexed_dataset(6, 6);
    BatchStream stream(ds, 5, true, 11, 8);
    Tensor images;
    std::vector<int> labels;
    while (stream.next(images, labels))
        for (int64_t n = 0; n < images.shape().n; ++n) {
            const int idx = decode_index(images, n);
            CHECK(labels[static_cast<size_t>(n)] == (idx < 6 ? kWithMask : kWithoutMask));
        }
}

TEST_CASE("to_model_input resizes then normalizes") {
    Image img = make_image(3, 3, 255, 0, 128);
    Tensor t = to_model_input(img, 8);
    REQUIRE(t.shape() == Shape4{1, 3, 8, 8});
    CHECK(t.at(0, 0, 4, 4) == 1.0f);
    CHECK(t.at(0, 1, 4, 4) == -1.0f);

    // Already at target resolution: identical to plain normalize.
    Image exact = make_image(8, 8, 10, 20, 30);
    Tensor a = to_model_input(exact, 8);
    Tensor b = normalize(exact);
    REQUIRE(a.shape() == b.shape());
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
