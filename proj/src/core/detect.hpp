#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/model.hpp"

namespace masknet {

struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    bool operator==(const BBox&) const = default;
};

// Clamps into the frame, keeping at least one pixel on each side.
BBox clamp_bbox(const BBox& box, int frame_w, int frame_h);

struct Detection {
    BBox box;
    int label = 0;          // 0 WithMask, 1 WithoutMask
    float confidence = 0.0f;  // softmax probability of the chosen label
};

// Timestamped per-frame pipeline output; the persisted unit of evidence.
struct DetectionRecord {
    int64_t timestamp_ms = 0;
    int64_t frame_index = 0;
    std::string source_id;
    std::vector<Detection> detections;
};

struct LocatorSpec {
    enum class Kind { whole_frame, center_fraction, sidecar };
    Kind kind = Kind::whole_frame;
    double fraction = 0.5;     // for center_fraction, in (0,1]
    std::string sidecar_path;  // for sidecar
};

// "whole_frame" | "center:0.5" | "sidecar:boxes.txt"
LocatorSpec parse_locator(const std::string& text);

// Face localization plug. The sidecar file is loaded once at construction:
// text lines "frame_index x y w h", '#' comments allowed.
class Locator {
public:
    explicit Locator(const LocatorSpec& spec);
    std::vector<BBox> locate(const Image& frame, int64_t frame_index) const;

private:
    LocatorSpec spec_;
    std::map<int64_t, std::vector<BBox>> sidecar_;
};

// crop -> resize to model resolution -> normalize -> infer forward ->
// argmax (ties to the lower index).
Detection classify_crop(const Model& model, const Image& frame, const BBox& box);

// Box outlines drawn 2 px inward: green (0,255,0) WithMask, red (255,0,0)
// WithoutMask. Pixels off the outlines are untouched.
Image annotate(const Image& frame, const std::vector<Detection>& detections, int thickness = 2);

class FrameSource {
public:
    virtual ~FrameSource() = default;
    // Returns false at end of stream; throws with position info on
    // malformed frames.
    virtual bool next(Image& frame) = 0;
    virtual std::string describe() const = 0;
};

// Directory of frame_000001.ppm, frame_000002.ppm, ... (1-based, contiguous).
std::unique_ptr<FrameSource> open_frame_dir(const std::string& dir);
// Raw stream: "RVID" magic, u32 LE width/height/frame_count (0 = unbounded),
// then packed RGB24 frames.
std::unique_ptr<FrameSource> open_rvid(const std::string& path);
void write_rvid(const std::string& path, const std::vector<Image>& frames);

struct PipelineOptions {
    LocatorSpec locator;
    std::string annotate_dir;        // empty: no annotated frames written
    std::string source_id = "cam0";
    int64_t fixed_time_ms = -1;      // -1: wall clock at stream start
    int64_t frame_interval_ms = 33;
};

struct PipelineSummary {
    int64_t frames = 0;
    int64_t detections = 0;
    int64_t with_mask = 0;
    int64_t without_mask = 0;
    int64_t alerts = 0;  // filled by the monitor wrapper
};

using RecordSink = std::function<void(const DetectionRecord&)>;

// Fig. 2 pipeline: for each frame in order, locate -> classify each box ->
// annotate (when configured) -> hand the record to the sink. Lossless: one
// record per frame, order preserved.
PipelineSummary process_stream(FrameSource& source, const Model& model,
                               const PipelineOptions& opts, const RecordSink& sink);

} // namespace masknet
