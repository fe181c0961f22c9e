#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <torch/torch.h>

#include "geopix/config.hpp"

namespace test {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("geopix_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Small model used by the architecture tests: 64 px inputs, two decoder layers.
inline geopix::ModelConfig tiny_model() {
    geopix::ModelConfig m;
    m.image_size = 64;
    m.encoder.embed_dim = 16;
    m.encoder.heads = {1, 2, 2, 4};
    m.lm.hidden_size = 32;
    m.lm.layers = 2;
    m.lm.heads = 2;
    m.lm.max_positions = 512;
    m.mask.dim = 32;
    m.mask.heads = 2;
    m.mask.ffn_dim = 64;
    m.mask.groups = 4;
    m.mask.decoder_layers = 2;
    return m;
}

inline bool all_finite(const torch::Tensor& t) { return torch::isfinite(t).all().item<bool>(); }

}  // namespace test
