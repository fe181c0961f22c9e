#include "geopix/tokenizer.hpp"

namespace geopix {

std::vector<std::int64_t> ByteTokenizer::encode(std::string_view text) {
    std::vector<std::int64_t> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(static_cast<std::uint8_t>(c));
    return ids;
}

std::string ByteTokenizer::decode(std::span<const std::int64_t> ids) {
    std::string text;
    for (std::int64_t id : ids) {
        if (id >= 0 && id < 256) text.push_back(static_cast<char>(id));
    }
    return text;
}

}  // namespace geopix
