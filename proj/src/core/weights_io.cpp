#include "core/weights_io.hpp"

#include <cstring>
#include <fstream>

namespace masknet {

namespace {

constexpr char kMagic[4] = {'M', 'N', 'V', '2'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(out, bits);
}

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

    uint32_t get_u32() {
        need(4);
        const uint8_t* p = data_ + pos_;
        pos_ += 4;
        return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
               static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
    }

    float get_f32() {
        const uint32_t bits = get_u32();
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string get_string(size_t len) {
        need(len);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
        pos_ += len;
        return s;
    }

    size_t remaining() const { return size_ - pos_; }

private:
    void need(size_t n) {
        if (size_ - pos_ < n)
            fail(ErrorCode::truncated, "weights file truncated at byte " + std::to_string(pos_));
    }

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

} // namespace

std::vector<uint8_t> serialize_weights(const Model& model) {
    const auto views = model.params(true);
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(model.config.input_resolution));
    put_f32(out, model.config.width_multiplier);
    put_u32(out, static_cast<uint32_t>(model.config.num_classes));
    put_f32(out, model.config.dropout_rate);
    put_u32(out, static_cast<uint32_t>(views.size()));
    for (const auto& v : views) {
        put_u32(out, static_cast<uint32_t>(v.layer_index));
        put_u32(out, static_cast<uint32_t>(v.name.size()));
        out.insert(out.end(), v.name.begin(), v.name.end());
        put_u32(out, static_cast<uint32_t>(v.extents.size()));
        for (int64_t e : v.extents) put_u32(out, static_cast<uint32_t>(e));
        for (int64_t i = 0; i < v.count; ++i) put_f32(out, v.data[i]);
    }
    return out;
}

Model deserialize_weights(const uint8_t* data, size_t size) {
    ByteReader r(data, size);
    const std::string magic = r.get_string(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        fail(ErrorCode::bad_magic, "not a MNV2 weights file (magic '" + magic + "')");
    const uint32_t version = r.get_u32();
    if (version != kVersion)
        fail(ErrorCode::bad_version, "unsupported weights format version " +
                                         std::to_string(version) + " (expected " +
                                         std::to_string(kVersion) + ")");

    ModelConfig cfg;
    cfg.input_resolution = static_cast<int>(r.get_u32());
    cfg.width_multiplier = r.get_f32();
    cfg.num_classes = static_cast<int>(r.get_u32());
    cfg.dropout_rate = r.get_f32();

    Model model = build_mobilenet_v2(cfg, 0);
    auto views = model.params(true);

    const uint32_t record_count = r.get_u32();
    if (record_count != views.size())
        fail(ErrorCode::shape_mismatch,
             "weights file has " + std::to_string(record_count) + " records, model needs " +
                 std::to_string(views.size()));

    for (auto& v : views) {
        const uint32_t layer_id = r.get_u32();
        const uint32_t name_len = r.get_u32();
        const std::string name = r.get_string(name_len);
        if (layer_id != static_cast<uint32_t>(v.layer_index) || name != v.name)
            fail(ErrorCode::shape_mismatch,
                 "weights record '" + name + "' (layer " + std::to_string(layer_id) +
                     ") does not match expected '" + v.name + "' (layer " +
                     std::to_string(v.layer_index) + ")");
        const uint32_t rank = r.get_u32();
        if (rank != v.extents.size())
            fail(ErrorCode::shape_mismatch,
                 "weights record '" + name + "': rank " + std::to_string(rank) +
                     " != expected " + std::to_string(v.extents.size()));
        int64_t count = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            const uint32_t e = r.get_u32();
            if (static_cast<int64_t>(e) != v.extents[k])
                fail(ErrorCode::shape_mismatch,
                     "weights record '" + name + "': extent " + std::to_string(k) + " is " +
                         std::to_string(e) + ", expected " + std::to_string(v.extents[k]));
            count *= e;
        }
        for (int64_t i = 0; i < count; ++i) v.data[i] = r.get_f32();
    }

    if (r.remaining() != 0)
        fail(ErrorCode::parse, "weights file has " + std::to_string(r.remaining()) +
                                   " trailing bytes after the last record");
    return model;
}

void save_weights(const Model& model, const std::string& path) {
    const std::vector<uint8_t> bytes = serialize_weights(model);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(ErrorCode::io, "failed writing '" + path + "'");
}

Model load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot open '" + path + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (f.bad()) fail(ErrorCode::io, "failed reading '" + path + "'");
    return deserialize_weights(bytes.data(), bytes.size());
}

} // namespace masknet
