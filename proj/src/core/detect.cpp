#include "core/detect.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/dataset.hpp"
#include "core/timefmt.hpp"

namespace fs = std::filesystem;

namespace masknet {

BBox clamp_bbox(const BBox& box, int frame_w, int frame_h) {
    BBox b = box;
    b.x = std::clamp(b.x, 0, frame_w - 1);
    b.y = std::clamp(b.y, 0, frame_h - 1);
    b.w = std::clamp(b.w, 1, frame_w - b.x);
    b.h = std::clamp(b.h, 1, frame_h - b.y);
    return b;
}

LocatorSpec parse_locator(const std::string& text) {
    LocatorSpec spec;
    if (text == "whole_frame") {
        spec.kind = LocatorSpec::Kind::whole_frame;
        return spec;
    }
    if (text.rfind("center:", 0) == 0) {
        spec.kind = LocatorSpec::Kind::center_fraction;
        try {
            spec.fraction = std::stod(text.substr(7));
        } catch (const std::exception&) {
            fail(ErrorCode::parse, "bad locator fraction in '" + text + "'");
        }
        if (!(spec.fraction > 0.0 && spec.fraction <= 1.0))
            fail(ErrorCode::invalid_argument, "locator fraction must be in (0,1], got '" + text + "'");
        return spec;
    }
    if (text.rfind("sidecar:", 0) == 0) {
        spec.kind = LocatorSpec::Kind::sidecar;
        spec.sidecar_path = text.substr(8);
        if (spec.sidecar_path.empty())
            fail(ErrorCode::invalid_argument, "sidecar locator needs a path");
        return spec;
    }
    fail(ErrorCode::invalid_argument,
         "unknown locator '" + text + "' (want whole_frame, center:F or sidecar:PATH)");
}

Locator::Locator(const LocatorSpec& spec) : spec_(spec) {
    if (spec_.kind != LocatorSpec::Kind::sidecar) return;
    std::ifstream f(spec_.sidecar_path);
    if (!f) fail(ErrorCode::io, "cannot open sidecar '" + spec_.sidecar_path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        long long frame = 0;
        BBox box;
        std::string extra;
        if (!(ss >> frame >> box.x >> box.y >> box.w >> box.h) || (ss >> extra))
            fail(ErrorCode::parse, "sidecar '" + spec_.sidecar_path + "' line " +
                                       std::to_string(lineno) + ": expected 'frame x y w h'");
        sidecar_[frame].push_back(box);
    }
}

std::vector<BBox> Locator::locate(const Image& frame, int64_t frame_index) const {
    switch (spec_.kind) {
        case LocatorSpec::Kind::whole_frame:
            return {BBox{0, 0, frame.width, frame.height}};
        case LocatorSpec::Kind::center_fraction: {
            const int side = std::max(
                1, static_cast<int>(spec_.fraction * std::min(frame.width, frame.height)));
            return {BBox{(frame.width - side) / 2, (frame.height - side) / 2, side, side}};
        }
        case LocatorSpec::Kind::sidecar: {
            const auto it = sidecar_.find(frame_index);
            if (it == sidecar_.end()) return {};
            std::vector<BBox> boxes;
            boxes.reserve(it->second.size());
            for (const BBox& b : it->second)
                boxes.push_back(clamp_bbox(b, frame.width, frame.height));
            return boxes;
        }
    }
    return {};
}

Detection classify_crop(const Model& model, const Image& frame, const BBox& box) {
    const Image patch = crop(frame, box.x, box.y, box.w, box.h);
    const Tensor input = to_model_input(patch, model.config.input_resolution);
    const Tensor probs = model.forward(input);
    const int64_t k = probs.shape().c;
    int best = 0;
    float best_v = probs[0];
    for (int64_t j = 1; j < k; ++j)
        if (probs[j] > best_v) {
            best_v = probs[j];
            best = static_cast<int>(j);
        }
    return Detection{box, best, best_v};
}

Image annotate(const Image& frame, const std::vector<Detection>& detections, int thickness) {
    Image out = frame;
    for (const Detection& det : detections) {
        const BBox b = clamp_bbox(det.box, frame.width, frame.height);
        const uint8_t r = det.label == kWithMask ? 0 : 255;
        const uint8_t g = det.label == kWithMask ? 255 : 0;
        const int t = std::min({thickness, b.w, b.h});
        for (int row = 0; row < b.h; ++row) {
            const bool edge_row = row < t || row >= b.h - t;
            for (int col = 0; col < b.w; ++col) {
                if (!edge_row && col >= t && col < b.w - t) continue;
                uint8_t* p = out.px(b.x + col, b.y + row);
                p[0] = r;
                p[1] = g;
                p[2] = 0;
            }
        }
    }
    return out;
}

namespace {

std::string frame_file_name(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06lld.ppm", static_cast<long long>(index));
    return buf;
}

class DirFrameSource : public FrameSource {
public:
    explicit DirFrameSource(std::string dir) : dir_(std::move(dir)) {
        std::error_code ec;
        if (!fs::is_directory(dir_, ec))
            fail(ErrorCode::io, "frame directory '" + dir_ + "' does not exist");
        if (!fs::exists(fs::path(dir_) / frame_file_name(1)))
            fail(ErrorCode::data, "frame directory '" + dir_ + "' has no frame_000001.ppm");
    }

    bool next(Image& frame) override {
        const fs::path path = fs::path(dir_) / frame_file_name(next_index_);
        if (!fs::exists(path)) return false;
        try {
            frame = load_ppm(path.string());
        } catch (const Error& e) {
            fail(e.code(), "frame " + std::to_string(next_index_) + " ('" + path.string() +
                               "'): " + e.what());
        }
        if (width_ == 0) {
            width_ = frame.width;
            height_ = frame.height;
        } else if (frame.width != width_ || frame.height != height_) {
            fail(ErrorCode::data, "frame " + std::to_string(next_index_) + " is " +
                                      std::to_string(frame.width) + "x" +
                                      std::to_string(frame.height) + ", stream is " +
                                      std::to_string(width_) + "x" + std::to_string(height_));
        }
        ++next_index_;
        return true;
    }

    std::string describe() const override { return "dir:" + dir_; }

private:
    std::string dir_;
    int64_t next_index_ = 1;
    int width_ = 0, height_ = 0;
};

class RvidFrameSource : public FrameSource {
public:
    explicit RvidFrameSource(std::string path) : path_(std::move(path)), f_(path_, std::ios::binary) {
        if (!f_) fail(ErrorCode::io, "cannot open raw stream '" + path_ + "'");
        char magic[4];
        if (!f_.read(magic, 4) || std::memcmp(magic, "RVID", 4) != 0)
            fail(ErrorCode::bad_magic, "'" + path_ + "' is not an RVID stream");
        width_ = static_cast<int>(read_u32());
        height_ = static_cast<int>(read_u32());
        declared_ = read_u32();
        if (width_ < 1 || height_ < 1)
            fail(ErrorCode::parse, "RVID '" + path_ + "': bad extents " +
                                       std::to_string(width_) + "x" + std::to_string(height_));
    }

    bool next(Image& frame) override {
        if (declared_ != 0 && served_ >= declared_) return false;
        frame.width = width_;
        frame.height = height_;
        frame.pixels.resize(static_cast<size_t>(3) * width_ * height_);
        f_.read(reinterpret_cast<char*>(frame.pixels.data()),
                static_cast<std::streamsize>(frame.pixels.size()));
        const size_t got = static_cast<size_t>(f_.gcount());
        if (got == 0 && declared_ == 0) return false;  // unbounded stream ended cleanly
        if (got != frame.pixels.size())
            fail(ErrorCode::truncated, "RVID '" + path_ + "': frame " +
                                           std::to_string(served_ + 1) + " truncated (" +
                                           std::to_string(got) + " of " +
                                           std::to_string(frame.pixels.size()) + " bytes)");
        ++served_;
        return true;
    }

    std::string describe() const override { return "rvid:" + path_; }

private:
    uint32_t read_u32() {
        uint8_t b[4];
        if (!f_.read(reinterpret_cast<char*>(b), 4))
            fail(ErrorCode::truncated, "RVID '" + path_ + "': header truncated");
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    }

    std::string path_;
    std::ifstream f_;
    int width_ = 0, height_ = 0;
    uint32_t declared_ = 0;
    uint32_t served_ = 0;
};

} // namespace

std::unique_ptr<FrameSource> open_frame_dir(const std::string& dir) {
    return std::make_unique<DirFrameSource>(dir);
}

std::unique_ptr<FrameSource> open_rvid(const std::string& path) {
    return std::make_unique<RvidFrameSource>(path);
}

void write_rvid(const std::string& path, const std::vector<Image>& frames) {
    if (frames.empty()) fail(ErrorCode::invalid_argument, "write_rvid: no frames");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
    auto put_u32 = [&](uint32_t v) {
        const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                              static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        f.write(reinterpret_cast<const char*>(b), 4);
    };
    f.write("RVID", 4);
    put_u32(static_cast<uint32_t>(frames[0].width));
    put_u32(static_cast<uint32_t>(frames[0].height));
    put_u32(static_cast<uint32_t>(frames.size()));
    for (const Image& img : frames) {
        if (img.width != frames[0].width || img.height != frames[0].height)
            fail(ErrorCode::invalid_argument, "write_rvid: frames must share one resolution");
        f.write(reinterpret_cast<const char*>(img.pixels.data()),
                static_cast<std::streamsize>(img.pixels.size()));
    }
    if (!f) fail(ErrorCode::io, "failed writing '" + path + "'");
}

PipelineSummary process_stream(FrameSource& source, const Model& model,
                               const PipelineOptions& opts, const RecordSink& sink) {
    const Locator locator(opts.locator);
    if (!opts.annotate_dir.empty()) {
        std::error_code ec;
        fs::create_directories(opts.annotate_dir, ec);
        if (ec) fail(ErrorCode::io, "cannot create '" + opts.annotate_dir + "'");
    }
    const int64_t t0 = opts.fixed_time_ms >= 0 ? opts.fixed_time_ms : wall_clock_ms();

    PipelineSummary summary;
    Image frame;
    int64_t index = 0;
    while (source.next(frame)) {
        ++index;
        DetectionRecord rec;
        rec.frame_index = index;
        rec.source_id = opts.source_id;
        rec.timestamp_ms = t0 + (index - 1) * opts.frame_interval_ms;
        for (const BBox& box : locator.locate(frame, index)) {
            const Detection det = classify_crop(model, frame, box);
            if (det.label == kWithMask) ++summary.with_mask;
            else ++summary.without_mask;
            ++summary.detections;
            rec.detections.push_back(det);
        }
        if (!opts.annotate_dir.empty()) {
            const Image annotated = annotate(frame, rec.detections);
            save_ppm(annotated, (fs::path(opts.annotate_dir) / frame_file_name(index)).string());
        }
        if (sink) sink(rec);
        ++summary.frames;
    }
    return summary;
}

} // namespace masknet
