#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "geopix/dataset.hpp"
#include "geopix/image.hpp"

namespace geopix {

// SSIM stability constants, (k1 L)^2 and (k2 L)^2 for dynamic range L.
struct SsimConstants {
    double c1 = 6.5025;   // (0.01 * 255)^2
    double c2 = 58.5225;  // (0.03 * 255)^2

    static SsimConstants for_range(double dynamic_range, double k1 = 0.01, double k2 = 0.03) {
        return {(k1 * dynamic_range) * (k1 * dynamic_range), (k2 * dynamic_range) * (k2 * dynamic_range)};
    }
};

// Pairwise SSIM between the non-overlapping patches of one image.
struct SSIMMatrix {
    Eigen::MatrixXd values;
    std::vector<double> means;
    std::vector<double> variances;
    SsimConstants constants;
    int patch_size = 0;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
};

// 1 - H / log2(levels) over the intensity histogram. Intensities are binned
// as v * levels / 256 when levels != 256.
double entropic_redundancy(const GrayImage& image, int levels = 256);
double entropic_redundancy(const Image& image, int levels = 256);

// Patches tile the image row-major; remainder pixels on the right and bottom are dropped.
// Throws std::invalid_argument when fewer than two patches fit.
SSIMMatrix ssim_matrix(const GrayImage& image, int patch_size = 16, const SsimConstants& constants = {});

// Mean of the N(N-1) off-diagonal entries.
double structural_redundancy(const SSIMMatrix& m);

struct RedundancyConfig {
    int patch_size = 16;
    int levels = 256;
    SsimConstants constants;
};

struct RedundancyReport {
    std::string id;
    double r_e = 0.0;
    double r_s = 0.0;
    int levels = 256;
    int patch_size = 16;
    std::size_t n_patches = 0;
};

RedundancyReport analyze_redundancy(const GrayImage& image, const RedundancyConfig& config, std::string id = {});

struct CorpusReport {
    std::vector<RedundancyReport> images;  // sorted by id
    double mean_r_e = 0.0;
    double std_r_e = 0.0;
    double mean_r_s = 0.0;
    double std_r_s = 0.0;
    std::vector<std::string> skipped;

    // Columns: id, r_e, r_s, N
    void write_csv(const std::filesystem::path& path) const;
};

CorpusReport corpus_report(std::vector<std::pair<std::string, GrayImage>> images, const RedundancyConfig& config);
// Every readable image file in the directory; undecodable files are skipped with a warning.
CorpusReport corpus_report(const std::filesystem::path& directory, const RedundancyConfig& config);
CorpusReport corpus_report(const DatasetManifest& manifest, const RedundancyConfig& config);

}  // namespace geopix
