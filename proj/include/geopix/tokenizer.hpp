#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geopix {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by special ids that
// text encoding never produces.
struct ByteTokenizer {
    static constexpr std::int64_t kEos = 256;
    static constexpr std::int64_t kPad = 257;
    static constexpr std::int64_t kImage = 258;
    static constexpr std::int64_t kDescriptionBegin = 259;
    static constexpr std::int64_t kDescriptionEnd = 260;
    static constexpr int kVocabSize = 261;

    static std::vector<std::int64_t> encode(std::string_view text);
    // Special ids are dropped.
    static std::string decode(std::span<const std::int64_t> ids);
    static bool is_special(std::int64_t id) { return id >= 256; }
};

}  // namespace geopix
