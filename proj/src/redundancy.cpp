#include "geopix/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>

#include "geopix/errors.hpp"

namespace geopix {

double entropic_redundancy(const GrayImage& image, int levels) {
    if (levels < 2) throw std::invalid_argument("entropic_redundancy: levels must be >= 2");
    if (image.empty()) throw std::invalid_argument("entropic_redundancy: empty image");
    std::vector<std::size_t> histogram(static_cast<std::size_t>(levels), 0);
    for (std::uint8_t v : image.pixels) {
        const auto bin = levels == 256 ? v : static_cast<std::size_t>(v) * static_cast<std::size_t>(levels) / 256;
        ++histogram[bin];
    }
    const double total = static_cast<double>(image.pixels.size());
    double entropy = 0.0;
    for (std::size_t count : histogram) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) / total;
        entropy -= p * std::log2(p);
    }
    return 1.0 - entropy / std::log2(static_cast<double>(levels));
}

double entropic_redundancy(const Image& image, int levels) {
    return entropic_redundancy(to_luminance(image), levels);
}

SSIMMatrix ssim_matrix(const GrayImage& image, int patch_size, const SsimConstants& constants) {
    if (patch_size < 1) throw std::invalid_argument("ssim_matrix: patch size must be positive");
    const int rows = image.height / patch_size;
    const int cols = image.width / patch_size;
    const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
    if (n < 2) {
        throw std::invalid_argument("ssim_matrix: fewer than two " + std::to_string(patch_size) + "px patches in a " +
                                    std::to_string(image.height) + "x" + std::to_string(image.width) + " image");
    }
    const Eigen::Index area = static_cast<Eigen::Index>(patch_size) * patch_size;

    // One centred patch per row.
    Eigen::MatrixXd centred(n, area);
    SSIMMatrix m;
    m.constants = constants;
    m.patch_size = patch_size;
    m.means.resize(static_cast<std::size_t>(n));
    m.variances.resize(static_cast<std::size_t>(n));
    for (int pr = 0; pr < rows; ++pr) {
        for (int pc = 0; pc < cols; ++pc) {
            const Eigen::Index i = static_cast<Eigen::Index>(pr) * cols + pc;
            for (int y = 0; y < patch_size; ++y) {
                for (int x = 0; x < patch_size; ++x) {
                    centred(i, static_cast<Eigen::Index>(y) * patch_size + x) = image.at(pr * patch_size + y, pc * patch_size + x);
                }
            }
            const double mean = centred.row(i).mean();
            centred.row(i).array() -= mean;
            m.means[static_cast<std::size_t>(i)] = mean;
        }
    }
    const Eigen::MatrixXd covariance = (centred * centred.transpose()) / static_cast<double>(area);
    for (Eigen::Index i = 0; i < n; ++i) m.variances[static_cast<std::size_t>(i)] = covariance(i, i);

    m.values.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mi = m.means[static_cast<std::size_t>(i)];
        const double vi = m.variances[static_cast<std::size_t>(i)];
        m.values(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double mj = m.means[static_cast<std::size_t>(j)];
            const double vj = m.variances[static_cast<std::size_t>(j)];
            const double s = ((2 * mi * mj + constants.c1) * (2 * covariance(i, j) + constants.c2)) /
                             ((mi * mi + mj * mj + constants.c1) * (vi + vj + constants.c2));
            m.values(i, j) = s;
            m.values(j, i) = s;
        }
    }
    return m;
}

double structural_redundancy(const SSIMMatrix& m) {
    const Eigen::Index n = m.values.rows();
    if (n < 2) throw std::invalid_argument("structural_redundancy: need at least two patches");
    const double off_diagonal = m.values.sum() - m.values.trace();
    return off_diagonal / static_cast<double>(n * (n - 1));
}

RedundancyReport analyze_redundancy(const GrayImage& image, const RedundancyConfig& config, std::string id) {
    RedundancyReport report;
    report.id = std::move(id);
    report.levels = config.levels;
    report.patch_size = config.patch_size;
    report.r_e = entropic_redundancy(image, config.levels);
    const SSIMMatrix m = ssim_matrix(image, config.patch_size, config.constants);
    report.n_patches = m.size();
    report.r_s = structural_redundancy(m);
    return report;
}

namespace {

void aggregate(CorpusReport& report) {
    if (report.images.empty()) {
        throw std::runtime_error("redundancy: no decodable image in corpus");
    }
    const double n = static_cast<double>(report.images.size());
    double se = 0, ss = 0;
    for (const auto& r : report.images) {
        se += r.r_e;
        ss += r.r_s;
    }
    report.mean_r_e = se / n;
    report.mean_r_s = ss / n;
    double ve = 0, vs = 0;
    for (const auto& r : report.images) {
        ve += (r.r_e - report.mean_r_e) * (r.r_e - report.mean_r_e);
        vs += (r.r_s - report.mean_r_s) * (r.r_s - report.mean_r_s);
    }
    report.std_r_e = std::sqrt(ve / n);
    report.std_r_s = std::sqrt(vs / n);
}

bool looks_like_image(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff" || ext == ".bmp";
}

}  // namespace

CorpusReport corpus_report(std::vector<std::pair<std::string, GrayImage>> images, const RedundancyConfig& config) {
    std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    CorpusReport report;
    for (const auto& [id, image] : images) {
        try {
            report.images.push_back(analyze_redundancy(image, config, id));
        } catch (const std::invalid_argument& e) {
            std::cerr << "warning: skipping " << id << ": " << e.what() << '\n';
            report.skipped.push_back(id);
        }
    }
    aggregate(report);
    return report;
}

CorpusReport corpus_report(const std::filesystem::path& directory, const RedundancyConfig& config) {
    if (!std::filesystem::is_directory(directory)) {
        throw IngestionError("redundancy input is not a directory: " + directory.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(directory)) {
        if (entry.is_regular_file() && looks_like_image(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::pair<std::string, GrayImage>> images;
    std::vector<std::string> skipped;
    for (const auto& file : files) {
        try {
            images.emplace_back(file.stem().string(), read_gray(file));
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << file.string() << ": " << e.what() << '\n';
            skipped.push_back(file.stem().string());
        }
    }
    CorpusReport report = corpus_report(std::move(images), config);
    report.skipped.insert(report.skipped.end(), skipped.begin(), skipped.end());
    std::sort(report.skipped.begin(), report.skipped.end());
    return report;
}

CorpusReport corpus_report(const DatasetManifest& manifest, const RedundancyConfig& config) {
    std::vector<std::pair<std::string, GrayImage>> images;
    std::vector<std::string> skipped;
    for (const auto& record : manifest.records) {
        try {
            images.emplace_back(record.id, read_gray(record.image_path));
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << record.id << ": " << e.what() << '\n';
            skipped.push_back(record.id);
        }
    }
    CorpusReport report = corpus_report(std::move(images), config);
    report.skipped.insert(report.skipped.end(), skipped.begin(), skipped.end());
    return report;
}

void CorpusReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "id,r_e,r_s,N\n" << std::setprecision(10);
    for (const auto& r : images) out << r.id << ',' << r.r_e << ',' << r.r_s << ',' << r.n_patches << '\n';
}

}  // namespace geopix
