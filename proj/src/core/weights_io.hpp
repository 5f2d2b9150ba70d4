#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace masknet {

// .mnv2w binary container, little-endian throughout:
//   "MNV2" | version u32 (=1) | resolution u32 | width f32 | num_classes u32 |
//   dropout f32 | record_count u32 | records...
// One record per parameter array, buffers included:
//   layer_id u32 | name_len u32 | name bytes | rank u32 | extents u32[rank] |
//   values f32[product(extents)]
// Round trips are bit-exact. Trailing bytes after the last record are an
// error; load rebuilds the architecture from the embedded config.
std::vector<uint8_t> serialize_weights(const Model& model);
Model deserialize_weights(const uint8_t* data, size_t size);

void save_weights(const Model& model, const std::string& path);
Model load_weights(const std::string& path);

} // namespace masknet
