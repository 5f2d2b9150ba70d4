#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "core/detect.hpp"

namespace masknet {

struct AlertPolicy {
    float min_confidence = 0.8f;  // in [0.5, 1]
    int consecutive_frames = 3;   // K >= 1
    int cooldown_frames = 30;     // >= 0
};

void validate_policy(const AlertPolicy& policy);

struct Alert {
    int64_t timestamp_ms = 0;
    std::string source_id;
    int64_t frame_index = 0;  // triggering frame
    int streak = 0;
    float max_confidence = 0.0f;  // max violating confidence in the streak
};

// Debounced alert state machine. A frame violates if any detection is
// WithoutMask with confidence >= min_confidence. An alert fires on the K-th
// consecutive violating frame, then stays silent for cooldown_frames
// observations; a clean frame resets the streak.
class AlertMonitor {
public:
    explicit AlertMonitor(const AlertPolicy& policy);
    // Records must arrive with strictly increasing frame_index.
    std::optional<Alert> observe(const DetectionRecord& record);
    const AlertPolicy& policy() const { return policy_; }
    int64_t alerts_fired() const { return alerts_fired_; }

private:
    AlertPolicy policy_;
    int64_t last_frame_index_;
    int64_t ordinal_ = 0;        // observations seen
    int64_t last_fire_ordinal_;  // ordinal of the last alert
    int streak_ = 0;
    float streak_max_conf_ = 0.0f;
    int64_t alerts_fired_ = 0;
};

// One record per line, fixed key order
// {"ts":...,"frame":...,"source":...,"detections":[{"x","y","w","h","label","conf"}]},
// confidence at 4 decimal places, ts ISO-8601 UTC.
std::string record_to_json(const DetectionRecord& record);
std::string alert_to_json(const Alert& alert);  // keys ts, source, frame, streak, max_conf

// Append-only JSONL log, flushed per record so a crash loses at most the
// line being written.
class RecordLogWriter {
public:
    explicit RecordLogWriter(const std::string& path);
    void write(const DetectionRecord& record);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

// Reads a record log back. A final line that does not parse is treated as a
// crash-truncated tail: skipped, with a note in *warning when given. A bad
// line anywhere else is a parse error.
std::vector<DetectionRecord> read_record_log(const std::string& path,
                                             std::string* warning = nullptr);

struct Report {
    int64_t window_start_ms = 0;
    int64_t window_end_ms = 0;
    int64_t frames = 0;
    int64_t detections = 0;
    int64_t with_mask = 0;
    int64_t without_mask = 0;
    int64_t alerts = 0;  // replay of `policy` over the window's records
    std::optional<double> compliance;  // with_mask / detections
};

// Aggregates records with timestamp in [start_ms, end_ms]. Alerts are
// counted by replaying a fresh AlertMonitor over the in-window records.
Report report(const std::string& log_path, int64_t start_ms, int64_t end_ms,
              const AlertPolicy& policy = {});

struct SinkSpec {
    enum class Kind { stdout_sink, file_sink, http_sink };
    Kind kind = Kind::stdout_sink;
    std::string target;  // file path or http url
};

// "stdout" | "file:PATH" | "http://host:port/path"
SinkSpec parse_sink(const std::string& text);

struct SinkStatus {
    SinkSpec sink;
    bool delivered = false;
    std::string detail;  // failure reason or http status
};

// Fans an alert out to every sink. Per-sink failures land in the status
// list; nothing is thrown into the pipeline.
std::vector<SinkStatus> dispatch_alert(const Alert& alert, const std::vector<SinkSpec>& sinks);

} // namespace masknet
