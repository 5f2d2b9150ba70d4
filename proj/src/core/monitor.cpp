#include "core/monitor.hpp"

#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include "core/error.hpp"
#include "core/timefmt.hpp"

#include "httplib.h"
#include "json.hpp"

namespace masknet {

void validate_policy(const AlertPolicy& policy) {
    if (policy.consecutive_frames < 1)
        fail(ErrorCode::invalid_argument, "alert policy: consecutive_frames must be >= 1");
    if (policy.cooldown_frames < 0)
        fail(ErrorCode::invalid_argument, "alert policy: cooldown_frames must be >= 0");
    if (!(policy.min_confidence >= 0.5f && policy.min_confidence <= 1.0f))
        fail(ErrorCode::invalid_argument, "alert policy: min_confidence must be in [0.5, 1]");
}

AlertMonitor::AlertMonitor(const AlertPolicy& policy)
    : policy_(policy),
      last_frame_index_(std::numeric_limits<int64_t>::min()),
      last_fire_ordinal_(std::numeric_limits<int64_t>::min() / 2) {
    validate_policy(policy_);
}

std::optional<Alert> AlertMonitor::observe(const DetectionRecord& record) {
    if (record.frame_index <= last_frame_index_)
        fail(ErrorCode::out_of_order,
             "frame " + std::to_string(record.frame_index) + " after frame " +
                 std::to_string(last_frame_index_) + " (source " + record.source_id + ")");
    last_frame_index_ = record.frame_index;
    ++ordinal_;

    bool violating = false;
    float frame_conf = 0.0f;
    for (const Detection& d : record.detections) {
        if (d.label == 1 && d.confidence >= policy_.min_confidence) {
            violating = true;
            frame_conf = std::max(frame_conf, d.confidence);
        }
    }
    if (!violating) {
        streak_ = 0;
        streak_max_conf_ = 0.0f;
        return std::nullopt;
    }
    ++streak_;
    streak_max_conf_ = std::max(streak_max_conf_, frame_conf);
    if (streak_ < policy_.consecutive_frames) return std::nullopt;
    if (ordinal_ - last_fire_ordinal_ <= policy_.cooldown_frames) return std::nullopt;

    last_fire_ordinal_ = ordinal_;
    ++alerts_fired_;
    Alert alert;
    alert.timestamp_ms = record.timestamp_ms;
    alert.source_id = record.source_id;
    alert.frame_index = record.frame_index;
    alert.streak = streak_;
    alert.max_confidence = streak_max_conf_;
    return alert;
}

namespace {

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

std::string conf_str(float conf) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", static_cast<double>(conf));
    return buf;
}

std::string label_name(int label) {
    if (label == 0) return "with_mask";
    if (label == 1) return "without_mask";
    return "class" + std::to_string(label);
}

int label_from_name(const std::string& name) {
    if (name == "with_mask") return 0;
    if (name == "without_mask") return 1;
    if (name.rfind("class", 0) == 0) return std::stoi(name.substr(5));
    fail(ErrorCode::parse, "unknown detection label '" + name + "'");
}

} // namespace

std::string record_to_json(const DetectionRecord& record) {
    std::string out = "{\"ts\":\"" + format_iso8601_ms(record.timestamp_ms) + "\",\"frame\":" +
                      std::to_string(record.frame_index) + ",\"source\":\"" +
                      json_escape(record.source_id) + "\",\"detections\":[";
    for (size_t i = 0; i < record.detections.size(); ++i) {
        const Detection& d = record.detections[i];
        if (i) out += ',';
        out += "{\"x\":" + std::to_string(d.box.x) + ",\"y\":" + std::to_string(d.box.y) +
               ",\"w\":" + std::to_string(d.box.w) + ",\"h\":" + std::to_string(d.box.h) +
               ",\"label\":\"" + label_name(d.label) + "\",\"conf\":" + conf_str(d.confidence) +
               "}";
    }
    out += "]}";
    return out;
}

std::string alert_to_json(const Alert& alert) {
    return "{\"ts\":\"" + format_iso8601_ms(alert.timestamp_ms) + "\",\"source\":\"" +
           json_escape(alert.source_id) + "\",\"frame\":" + std::to_string(alert.frame_index) +
           ",\"streak\":" + std::to_string(alert.streak) +
           ",\"max_conf\":" + conf_str(alert.max_confidence) + "}";
}

RecordLogWriter::RecordLogWriter(const std::string& path)
    : path_(path), out_(path, std::ios::out | std::ios::app) {
    if (!out_) fail(ErrorCode::io, "cannot open record log for append: " + path);
}

void RecordLogWriter::write(const DetectionRecord& record) {
    out_ << record_to_json(record) << '\n';
    out_.flush();
    if (!out_) fail(ErrorCode::io, "record log write failed: " + path_);
}

std::vector<DetectionRecord> read_record_log(const std::string& path, std::string* warning) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open record log: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();

    std::vector<std::pair<size_t, std::string>> lines;  // (line number, text)
    size_t pos = 0, lineno = 0;
    while (pos < content.size()) {
        size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) nl = content.size();
        ++lineno;
        std::string line = content.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) lines.emplace_back(lineno, line);
        pos = nl + 1;
    }

    std::vector<DetectionRecord> records;
    records.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        const bool last = (i + 1 == lines.size());
        try {
            auto j = nlohmann::json::parse(lines[i].second);
            DetectionRecord r;
            r.timestamp_ms = parse_iso8601_ms(j.at("ts").get<std::string>());
            r.frame_index = j.at("frame").get<int64_t>();
            r.source_id = j.at("source").get<std::string>();
            for (const auto& d : j.at("detections")) {
                Detection det;
                det.box.x = d.at("x").get<int>();
                det.box.y = d.at("y").get<int>();
                det.box.w = d.at("w").get<int>();
                det.box.h = d.at("h").get<int>();
                det.label = label_from_name(d.at("label").get<std::string>());
                det.confidence = d.at("conf").get<float>();
                r.detections.push_back(det);
            }
            records.push_back(std::move(r));
        } catch (const std::exception& e) {
            // A crash mid-append leaves at most one bad line, the last one.
            if (last) {
                if (warning)
                    *warning = "skipped truncated final line " +
                               std::to_string(lines[i].first) + " of " + path;
                break;
            }
            fail(ErrorCode::parse, "record log '" + path + "' line " +
                                       std::to_string(lines[i].first) + ": " + e.what());
        }
    }
    return records;
}

Report report(const std::string& log_path, int64_t start_ms, int64_t end_ms,
              const AlertPolicy& policy) {
    if (end_ms < start_ms)
        fail(ErrorCode::invalid_argument, "report window end precedes start");
    const std::vector<DetectionRecord> all = read_record_log(log_path);

    Report rep;
    rep.window_start_ms = start_ms;
    rep.window_end_ms = end_ms;
    AlertMonitor replay(policy);
    for (const DetectionRecord& r : all) {
        if (r.timestamp_ms < start_ms || r.timestamp_ms > end_ms) continue;
        ++rep.frames;
        for (const Detection& d : r.detections) {
            ++rep.detections;
            if (d.label == 0) ++rep.with_mask;
            else ++rep.without_mask;
        }
        if (replay.observe(r)) ++rep.alerts;
    }
    if (rep.detections > 0)
        rep.compliance = static_cast<double>(rep.with_mask) / static_cast<double>(rep.detections);
    return rep;
}

SinkSpec parse_sink(const std::string& text) {
    SinkSpec spec;
    if (text == "stdout") {
        spec.kind = SinkSpec::Kind::stdout_sink;
        return spec;
    }
    if (text.rfind("file:", 0) == 0) {
        spec.kind = SinkSpec::Kind::file_sink;
        spec.target = text.substr(5);
        if (spec.target.empty())
            fail(ErrorCode::invalid_argument, "file sink needs a path: '" + text + "'");
        return spec;
    }
    if (text.rfind("http://", 0) == 0) {
        spec.kind = SinkSpec::Kind::http_sink;
        spec.target = text;
        return spec;
    }
    if (text.rfind("https://", 0) == 0)
        fail(ErrorCode::unsupported, "https sinks are not supported, use http://");
    fail(ErrorCode::invalid_argument,
         "unknown sink '" + text + "' (expected stdout, file:PATH or http://...)");
}

namespace {

SinkStatus deliver(const Alert& alert, const SinkSpec& sink) {
    SinkStatus status;
    status.sink = sink;
    const std::string line = alert_to_json(alert);
    switch (sink.kind) {
        case SinkSpec::Kind::stdout_sink: {
            std::cout << line << "\n" << std::flush;
            status.delivered = true;
            status.detail = "written";
            break;
        }
        case SinkSpec::Kind::file_sink: {
            std::ofstream out(sink.target, std::ios::out | std::ios::app);
            if (!(out && (out << line << '\n') && (out.flush(), out.good()))) {
                status.detail = "cannot write " + sink.target;
                break;
            }
            status.delivered = true;
            status.detail = "appended";
            break;
        }
        case SinkSpec::Kind::http_sink: {
            // Split http://host[:port]/path into client base and request path.
            const size_t host_start = std::string("http://").size();
            const size_t slash = sink.target.find('/', host_start);
            const std::string base =
                slash == std::string::npos ? sink.target : sink.target.substr(0, slash);
            const std::string req_path =
                slash == std::string::npos ? "/" : sink.target.substr(slash);
            httplib::Client client(base);
            client.set_connection_timeout(2, 0);
            client.set_read_timeout(5, 0);
            auto res = client.Post(req_path, line, "application/json");
            if (!res) {
                status.detail = "connect failed: " + httplib::to_string(res.error());
                break;
            }
            status.detail = "http " + std::to_string(res->status);
            status.delivered = res->status >= 200 && res->status < 300;
            break;
        }
    }
    return status;
}

} // namespace

std::vector<SinkStatus> dispatch_alert(const Alert& alert, const std::vector<SinkSpec>& sinks) {
    std::vector<SinkStatus> statuses;
    statuses.reserve(sinks.size());
    for (const SinkSpec& sink : sinks) {
        try {
            statuses.push_back(deliver(alert, sink));
        } catch (const std::exception& e) {
            SinkStatus status;
            status.sink = sink;
            status.delivered = false;
            status.detail = e.what();
            statuses.push_back(std::move(status));
        }
    }
    return statuses;
}

} // namespace masknet
