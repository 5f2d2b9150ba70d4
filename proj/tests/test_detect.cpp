#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/detect.hpp"
#include "core/error.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"

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

struct TempTree {
    fs::path root;
    explicit TempTree(const std::string& name)
        : root(fs::temp_directory_path() / ("masknet_detect_" + name)) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
    std::string str() const { return root.string(); }
};

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream f(path);
    f << content;
}

// Head-only model with a constant-bias linear layer; logits (b0, b1) are
// independent of the input pixels.
Model bias_model(float b0, float b1) {
    Model m;
    m.config = {32, 1.0f, 2, 0.0f};
    m.class_names = default_class_names(2);
    auto pool = std::make_unique<GlobalAvgPoolLayer>();
    pool->name = "pool";
    m.layers.push_back(std::move(pool));
    auto fc = std::make_unique<LinearLayer>();
    fc->name = "fc";
    fc->weight = Tensor({2, 3, 1, 1});
    fc->bias = {b0, b1};
    m.layers.push_back(std::move(fc));
    auto sm = std::make_unique<SoftmaxLayer>();
    sm->name = "softmax";
    m.layers.push_back(std::move(sm));
    return m;
}

Image random_frame(int w, int h, Rng& rng) {
    Image img = make_image(w, h);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.next_below(256));
    return img;
}

bool on_border(int px, int py, const BBox& b, int t) {
    if (px < b.x || px >= b.x + b.w || py < b.y || py >= b.y + b.h) return false;
    return px - b.x < t || b.x + b.w - 1 - px < t || py - b.y < t || b.y + b.h - 1 - py < t;
}

} // namespace

TEST_CASE("clamp_bbox keeps boxes inside the frame with at least one pixel") {
    CHECK(clamp_bbox({10, 10, 20, 20}, 100, 100) == BBox{10, 10, 20, 20});
    CHECK(clamp_bbox({-5, -7, 20, 20}, 100, 100) == BBox{0, 0, 20, 20});
    CHECK(clamp_bbox({90, 95, 20, 20}, 100, 100) == BBox{90, 95, 10, 5});
    CHECK(clamp_bbox({150, 150, 10, 10}, 100, 100) == BBox{99, 99, 1, 1});
    CHECK(clamp_bbox({5, 5, 0, 0}, 100, 100) == BBox{5, 5, 1, 1});
}

TEST_CASE("parse_locator understands the three spellings") {
    CHECK(parse_locator("whole_frame").kind == LocatorSpec::Kind::whole_frame);

    LocatorSpec center = parse_locator("center:0.5");
    CHECK(center.kind == LocatorSpec::Kind::center_fraction);
    CHECK(center.fraction == 0.5);

    LocatorSpec side = parse_locator("sidecar:boxes.txt");
    CHECK(side.kind == LocatorSpec::Kind::sidecar);
    CHECK(side.sidecar_path == "boxes.txt");
}

TEST_CASE("parse_locator error contract") {
    CHECK(code_of([] { parse_locator("nonsense"); }) == ErrorCode::invalid_argument);
    CHECK(code_of([] { parse_locator("center:abc"); }) == ErrorCode::parse);
    CHECK(code_of([] { parse_locator("center:0"); }) == ErrorCode::invalid_argument);
    CHECK(code_of([] { parse_locator("center:1.5"); }) == ErrorCode::invalid_argument);
    CHECK(code_of([] { parse_locator("sidecar:"); }) == ErrorCode::invalid_argument);
}

TEST_CASE("whole_frame locator covers 640x480 exactly") {
    Locator loc(parse_locator("whole_frame"));
    auto boxes = loc.locate(make_image(640, 480), 1);
    REQUIRE(boxes.size() == 1);
    CHECK(boxes[0] == BBox{0, 0, 640, 480});
}

TEST_CASE("center:0.5 on a 100x100 frame gives (25,25,50,50)") {
    Locator loc(parse_locator("center:0.5"));
    auto boxes = loc.locate(make_image(100, 100), 1);
    REQUIRE(boxes.size() == 1);
    CHECK(boxes[0] == BBox{25, 25, 50, 50});
}

TEST_CASE("sidecar locator: per-frame lookup, clamping, comments") {
    TempTree tree("sidecar_ok");
    const fs::path file = tree.root / "boxes.txt";
    write_text(file,
               "# ground truth boxes\n"
               "3 10 10 20 20\n"
               "3 40 40 25 25 # second face\n"
               "\n"
               "5 -5 -5 30 30\n");
    Locator loc(parse_locator("sidecar:" + file.string()));
    Image frame = make_image(100, 100);

    auto f3 = loc.locate(frame, 3);
    REQUIRE(f3.size() == 2);
    CHECK(f3[0] == BBox{10, 10, 20, 20});
    CHECK(f3[1] == BBox{40, 40, 25, 25});

    CHECK(loc.locate(frame, 4).empty());

    auto f5 = loc.locate(frame, 5);
    REQUIRE(f5.size() == 1);
    CHECK(f5[0] == BBox{0, 0, 30, 30});  // clamped into the frame
}

TEST_CASE("sidecar parse failure names the offending line") {
    TempTree tree("sidecar_bad");
    const fs::path file = tree.root / "boxes.txt";
    write_text(file, "1 0 0 10 10\n2 5 5 10\n");
    try {
        Locator loc(parse_locator("sidecar:" + file.string()));
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    write_text(file, "1 0 0 10 10 99\n");
    CHECK(code_of([&] { Locator loc(parse_locator("sidecar:" + file.string())); }) ==
          ErrorCode::parse);

    CHECK(code_of([&] {
        Locator loc(parse_locator("sidecar:" + (tree.root / "missing.txt").string()));
    }) == ErrorCode::io);
}

TEST_CASE("classify_crop on a [0.9,0.1] stub model yields WithMask at 0.9") {
    // logits (ln 9, 0) -> softmax (0.9, 0.1)
    Model m = bias_model(std::log(9.0f), 0.0f);
    Rng rng(3);
    Image frame = random_frame(50, 40, rng);
    Detection det = classify_crop(m, frame, {5, 5, 30, 30});
    CHECK(det.label == kWithMask);
    CHECK(det.confidence == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(det.box == BBox{5, 5, 30, 30});
}

TEST_CASE("tied logits resolve to label 0 with confidence exactly 0.5") {
    Model m = bias_model(0.0f, 0.0f);
    Rng rng(4);
    Image frame = random_frame(50, 40, rng);
    Detection det = classify_crop(m, frame, {0, 0, 50, 40});
    CHECK(det.label == kWithMask);
    CHECK(det.confidence == 0.5f);
}

TEST_CASE("classifying the same crop twice is deterministic") {
    Model m = build_mobilenet_v2({32, 0.25f, 2, 0.5f}, 31);
    Rng rng(5);
    Image frame = random_frame(64, 48, rng);
    Detection a = classify_crop(m, frame, {10, 8, 40, 32});
    Detection b = classify_crop(m, frame, {10, 8, 40, 32});
    CHECK(a.label == b.label);
    CHECK(a.confidence == b.confidence);
}

TEST_CASE("two-class argmax confidence always lands in [0.5, 1]") {
    Rng rng(6);
    for (uint64_t seed = 0; seed < 3; ++seed) {
        Model m = build_mobilenet_v2({32, 0.25f, 2, 0.5f}, seed);
        for (int trial = 0; trial < 5; ++trial) {
            Image frame = random_frame(40, 40, rng);
            Detection det = classify_crop(m, frame, {0, 0, 40, 40});
            CHECK(det.confidence >= 0.5f);
            CHECK(det.confidence <= 1.0f);
        }
    }
}

TEST_CASE("annotate draws exact colors on the outlines and nothing else") {
    Rng rng(7);
    Image frame = random_frame(40, 30, rng);
    const BBox green_box{5, 5, 10, 8};
    const BBox red_box{20, 10, 12, 12};
    std::vector<Detection> dets = {{green_box, kWithMask, 0.9f}, {red_box, kWithoutMask, 0.8f}};

    Image out = annotate(frame, dets);
    REQUIRE(out.width == frame.width);
    REQUIRE(out.height == frame.height);
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            const uint8_t* p = out.px(x, y);
            if (on_border(x, y, green_box, 2)) {
                REQUIRE(p[0] == 0);
                REQUIRE(p[1] == 255);
                REQUIRE(p[2] == 0);
            } else if (on_border(x, y, red_box, 2)) {
                REQUIRE(p[0] == 255);
                REQUIRE(p[1] == 0);
                REQUIRE(p[2] == 0);
            } else {
                const uint8_t* q = frame.px(x, y);
                REQUIRE(p[0] == q[0]);
                REQUIRE(p[1] == q[1]);
                REQUIRE(p[2] == q[2]);
            }
        }
}

TEST_CASE("annotate with zero detections is the identity") {
    Rng rng(8);
    Image frame = random_frame(20, 20, rng);
    CHECK(annotate(frame, {}) == frame);
}

TEST_CASE("directory frame source reads numbered frames in order") {
    TempTree tree("dir_source");
    for (int i = 1; i <= 3; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06d.ppm", i);
        save_ppm(make_image(8, 6, static_cast<uint8_t>(i * 10), 0, 0),
                 (tree.root / name).string());
    }
    auto src = open_frame_dir(tree.str());
    CHECK(src->describe().find(tree.str()) != std::string::npos);
    Image frame;
    for (int i = 1; i <= 3; ++i) {
        REQUIRE(src->next(frame));
        CHECK(frame.px(0, 0)[0] == i * 10);
    }
    CHECK_FALSE(src->next(frame));
}

TEST_CASE("directory frame source error contract") {
    SUBCASE("missing directory") {
        CHECK(code_of([] { open_frame_dir("/nonexistent_dir_zz"); }) == ErrorCode::io);
    }
    SUBCASE("no first frame") {
        TempTree tree("dir_empty");
        CHECK(code_of([&] { open_frame_dir(tree.str()); }) == ErrorCode::data);
    }
    SUBCASE("resolution change names the frame") {
        TempTree tree("dir_res");
        save_ppm(make_image(8, 6), (tree.root / "frame_000001.ppm").string());
        save_ppm(make_image(9, 6), (tree.root / "frame_000002.ppm").string());
        auto src = open_frame_dir(tree.str());
        Image frame;
        REQUIRE(src->next(frame));
        try {
            src->next(frame);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::data);
            CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
        }
    }
    SUBCASE("undecodable frame names the file") {
        TempTree tree("dir_corrupt");
        save_ppm(make_image(8, 6), (tree.root / "frame_000001.ppm").string());
        write_text(tree.root / "frame_000002.ppm", "garbage");
        auto src = open_frame_dir(tree.str());
        Image frame;
        REQUIRE(src->next(frame));
        try {
            src->next(frame);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("frame_000002.ppm") != std::string::npos);
        }
    }
}

TEST_CASE("rvid round trip preserves frames and order") {
    TempTree tree("rvid_rt");
    Rng rng(9);
    std::vector<Image> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(random_frame(8, 6, rng));
    const std::string path = (tree.root / "clip.rvid").string();
    write_rvid(path, frames);

    auto src = open_rvid(path);
    CHECK(src->describe().find("clip.rvid") != std::string::npos);
    Image frame;
    for (const Image& expect : frames) {
        REQUIRE(src->next(frame));
        CHECK(frame == expect);
    }
    CHECK_FALSE(src->next(frame));
}

TEST_CASE("rvid error contract") {
    TempTree tree("rvid_bad");
    SUBCASE("bad magic") {
        const fs::path p = tree.root / "junk.rvid";
        write_text(p, "JUNKxxxxxxxxxxxxxxxx");
        CHECK(code_of([&] { open_rvid(p.string()); }) == ErrorCode::bad_magic);
    }
    SUBCASE("header truncated") {
        const fs::path p = tree.root / "short.rvid";
        write_text(p, "RVID\x08");
        CHECK(code_of([&] { open_rvid(p.string()); }) == ErrorCode::truncated);
    }
    SUBCASE("frame truncated") {
        Rng rng(10);
        std::vector<Image> frames = {random_frame(8, 6, rng), random_frame(8, 6, rng)};
        const std::string path = (tree.root / "cut.rvid").string();
        write_rvid(path, frames);
        fs::resize_file(path, fs::file_size(path) - 10);
        auto src = open_rvid(path);
        Image frame;
        REQUIRE(src->next(frame));
        try {
            src->next(frame);
            FAIL("expected truncation");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::truncated);
            CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        CHECK(code_of([&] { open_rvid((tree.root / "none.rvid").string()); }) == ErrorCode::io);
    }
    SUBCASE("writer rejects empty or mixed-resolution input") {
        CHECK(code_of([&] { write_rvid((tree.root / "x.rvid").string(), {}); }) ==
              ErrorCode::invalid_argument);
        std::vector<Image> mixed = {make_image(8, 6), make_image(9, 6)};
        CHECK(code_of([&] { write_rvid((tree.root / "y.rvid").string(), mixed); }) ==
              ErrorCode::invalid_argument);
    }
}

TEST_CASE("unbounded rvid stream (count 0) reads until EOF") {
    TempTree tree("rvid_unbounded");
    const fs::path p = tree.root / "live.rvid";
    {
        std::ofstream f(p, std::ios::binary);
        auto put_u32 = [&](uint32_t v) {
            const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                               static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
            f.write(b, 4);
        };
        f.write("RVID", 4);
        put_u32(4);
        put_u32(2);
        put_u32(0);  // unbounded
        std::vector<uint8_t> px(3 * 4 * 2, 7);
        f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
        f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    }
    auto src = open_rvid(p.string());
    Image frame;
    CHECK(src->next(frame));
    CHECK(src->next(frame));
    CHECK_FALSE(src->next(frame));
}

TEST_CASE("process_stream: one record per frame, in order, matching the sidecar") {
    TempTree tree("pipeline");
    Rng rng(11);
    std::vector<Image> frames;
    for (int i = 0; i < 10; ++i) frames.push_back(random_frame(32, 24, rng));
    const std::string clip = (tree.root / "clip.rvid").string();
    write_rvid(clip, frames);

    // frames 1..10 get 1,2,0,1,2,0,1,2,0,1 boxes
    std::string sidecar_text;
    const int counts[10] = {1, 2, 0, 1, 2, 0, 1, 2, 0, 1};
    for (int i = 0; i < 10; ++i)
        for (int b = 0; b < counts[i]; ++b)
            sidecar_text += std::to_string(i + 1) + " " + std::to_string(2 + 8 * b) + " 2 8 8\n";
    const fs::path sidecar = tree.root / "boxes.txt";
    write_text(sidecar, sidecar_text);

    Model m = bias_model(std::log(9.0f), 0.0f);  // always WithMask at 0.9
    PipelineOptions opts;
    opts.locator = parse_locator("sidecar:" + sidecar.string());
    opts.source_id = "camX";
    opts.fixed_time_ms = 1000;
    opts.frame_interval_ms = 40;
    opts.annotate_dir = (tree.root / "annotated").string();

    std::vector<DetectionRecord> records;
    auto src = open_rvid(clip);
    PipelineSummary sum = process_stream(*src, m, opts, [&](const DetectionRecord& r) {
        records.push_back(r);
    });

    CHECK(sum.frames == 10);
    CHECK(sum.detections == 10);
    CHECK(sum.with_mask == 10);
    CHECK(sum.without_mask == 0);
    REQUIRE(records.size() == 10);
    for (int i = 0; i < 10; ++i) {
        CHECK(records[static_cast<size_t>(i)].frame_index == i + 1);
        CHECK(records[static_cast<size_t>(i)].source_id == "camX");
        CHECK(records[static_cast<size_t>(i)].timestamp_ms == 1000 + 40 * i);
        CHECK(records[static_cast<size_t>(i)].detections.size() ==
              static_cast<size_t>(counts[i]));
        for (const auto& det : records[static_cast<size_t>(i)].detections)
            CHECK(det.label == kWithMask);
    }

    // annotated frames exist; detection borders are green, elsewhere untouched
    for (int i = 1; i <= 10; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06d.ppm", i);
        const fs::path f = fs::path(opts.annotate_dir) / name;
        REQUIRE(fs::exists(f));
        if (counts[i - 1] == 0) CHECK(load_ppm(f.string()) == frames[static_cast<size_t>(i - 1)]);
    }
    Image annotated1 = load_ppm((fs::path(opts.annotate_dir) / "frame_000001.ppm").string());
    CHECK(annotated1.px(2, 2)[1] == 255);  // top-left outline pixel of the first box
}

TEST_CASE("process_stream with an empty sidecar emits zero-detection records") {
    TempTree tree("pipeline_empty");
    Rng rng(12);
    std::vector<Image> frames = {random_frame(16, 16, rng), random_frame(16, 16, rng)};
    const std::string clip = (tree.root / "clip.rvid").string();
    write_rvid(clip, frames);
    const fs::path sidecar = tree.root / "none.txt";
    write_text(sidecar, "# no boxes\n");

    Model m = bias_model(0.0f, 0.0f);
    PipelineOptions opts;
    opts.locator = parse_locator("sidecar:" + sidecar.string());
    opts.fixed_time_ms = 0;

    int zero_records = 0;
    auto src = open_rvid(clip);
    PipelineSummary sum = process_stream(*src, m, opts, [&](const DetectionRecord& r) {
        if (r.detections.empty()) ++zero_records;
    });
    CHECK(sum.frames == 2);
    CHECK(sum.detections == 0);
    CHECK(zero_records == 2);
}

TEST_CASE("process_stream is deterministic given a fixed time") {
    TempTree tree("pipeline_det");
    Rng rng(13);
    std::vector<Image> frames = {random_frame(32, 32, rng), random_frame(32, 32, rng)};
    const std::string clip = (tree.root / "clip.rvid").string();
    write_rvid(clip, frames);

    Model m = build_mobilenet_v2({32, 0.25f, 2, 0.5f}, 33);
    PipelineOptions opts;
    opts.locator = parse_locator("whole_frame");
    opts.fixed_time_ms = 5000;

    auto run = [&] {
        std::vector<DetectionRecord> records;
        auto src = open_rvid(clip);
        process_stream(*src, m, opts, [&](const DetectionRecord& r) { records.push_back(r); });
        return records;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].timestamp_ms == b[i].timestamp_ms);
        REQUIRE(a[i].detections.size() == b[i].detections.size());
        for (size_t j = 0; j < a[i].detections.size(); ++j) {
            CHECK(a[i].detections[j].label == b[i].detections[j].label);
            CHECK(a[i].detections[j].confidence == b[i].detections[j].confidence);
        }
    }
}
