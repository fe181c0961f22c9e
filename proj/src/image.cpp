#include "geopix/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "geopix/errors.hpp"

namespace geopix {

Image::Image(int h, int w, std::uint8_t fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

GrayImage::GrayImage(int h, int w, std::uint8_t fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

Mask::Mask(int h, int w, std::uint8_t fill)
    : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

std::size_t Mask::foreground() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

GrayImage to_luminance(const Image& image) {
    GrayImage gray(image.height, image.width);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
        const double y = 0.299 * image.pixels[3 * i] + 0.587 * image.pixels[3 * i + 1] + 0.114 * image.pixels[3 * i + 2];
        gray.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
    }
    return gray;
}

namespace {

int nearest_source(int dst, int dst_size, int src_size) {
    const double s = (dst + 0.5) * static_cast<double>(src_size) / dst_size;
    return std::clamp(static_cast<int>(std::floor(s)), 0, src_size - 1);
}

}  // namespace

Mask resize_nearest(const Mask& mask, int height, int width) {
    Mask out(height, width);
    if (mask.height == height && mask.width == width) {
        return mask;
    }
    std::vector<int> xs(width);
    for (int x = 0; x < width; ++x) xs[x] = nearest_source(x, width, mask.width);
    for (int y = 0; y < height; ++y) {
        const int sy = nearest_source(y, height, mask.height);
        for (int x = 0; x < width; ++x) out.at(y, x) = mask.at(sy, xs[x]);
    }
    return out;
}

Image resize_bilinear(const Image& image, int height, int width) {
    if (image.height == height && image.width == width) {
        return image;
    }
    Image out(height, width);
    const double sy_scale = static_cast<double>(image.height) / height;
    const double sx_scale = static_cast<double>(image.width) / width;
    for (int y = 0; y < height; ++y) {
        const double sy = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < width; ++x) {
            const double sx = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = image.at(y0, x0, c) * (1 - fx) + image.at(y0, x1, c) * fx;
                const double bottom = image.at(y1, x0, c) * (1 - fx) + image.at(y1, x1, c) * fx;
                out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - fy) + bottom * fy), 0L, 255L));
            }
        }
    }
    return out;
}

namespace {

cv::Mat decode(const std::filesystem::path& path, int flags) {
    if (!std::filesystem::exists(path)) {
        throw IngestionError("file not found: " + path.string());
    }
    cv::Mat mat = cv::imread(path.string(), flags);
    if (mat.empty()) {
        throw IngestionError("cannot decode image: " + path.string());
    }
    if (mat.depth() != CV_8U) {
        throw FormatError("expected 8-bit image: " + path.string());
    }
    return mat;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    const cv::Mat bgr = decode(path, cv::IMREAD_COLOR);
    Image image(bgr.rows, bgr.cols);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<std::uint8_t>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            image.at(y, x, 0) = row[3 * x + 2];
            image.at(y, x, 1) = row[3 * x + 1];
            image.at(y, x, 2) = row[3 * x];
        }
    }
    return image;
}

GrayImage read_gray(const std::filesystem::path& path) {
    return to_luminance(read_image(path));
}

Mask read_mask(const std::filesystem::path& path) {
    const cv::Mat gray = decode(path, cv::IMREAD_UNCHANGED);
    if (gray.channels() != 1) {
        throw FormatError("mask must be single-channel: " + path.string());
    }
    Mask mask(gray.rows, gray.cols);
    for (int y = 0; y < gray.rows; ++y) {
        const auto* row = gray.ptr<std::uint8_t>(y);
        for (int x = 0; x < gray.cols; ++x) {
            if (row[x] != 0 && row[x] != 255) {
                throw FormatError("mask value " + std::to_string(row[x]) + " outside {0, 255} at (" + std::to_string(y) + ", " +
                                  std::to_string(x) + ") in " + path.string());
            }
            mask.at(y, x) = row[x] == 255 ? 1 : 0;
        }
    }
    return mask;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    cv::Mat bgr(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = bgr.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width; ++x) {
            row[3 * x] = image.at(y, x, 2);
            row[3 * x + 1] = image.at(y, x, 1);
            row[3 * x + 2] = image.at(y, x, 0);
        }
    }
    if (!cv::imwrite(path.string(), bgr)) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
    cv::Mat gray(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y) {
        auto* row = gray.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
    }
    if (!cv::imwrite(path.string(), gray)) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

}  // namespace geopix
