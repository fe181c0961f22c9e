#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace geopix {

// Interleaved 8-bit RGB raster, row-major (HWC).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int h, int w, std::uint8_t fill = 0);

    std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    bool empty() const { return height <= 0 || width <= 0; }
};

// Single-channel 8-bit raster.
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(int h, int w, std::uint8_t fill = 0);

    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool empty() const { return height <= 0 || width <= 0; }
};

// Binary raster with values in {0, 1}.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;

    Mask() = default;
    Mask(int h, int w, std::uint8_t fill = 0);

    std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t foreground() const;
    bool same_shape(const Mask& other) const { return height == other.height && width == other.width; }
    friend bool operator==(const Mask&, const Mask&) = default;
};

// ITU-R BT.601 luma, rounded to the nearest level.
GrayImage to_luminance(const Image& image);

// Half-pixel-centred resampling. Nearest is used for masks, bilinear for images.
Mask resize_nearest(const Mask& mask, int height, int width);
Image resize_bilinear(const Image& image, int height, int width);

// Decoders throw IngestionError when the file is missing or undecodable.
Image read_image(const std::filesystem::path& path);
GrayImage read_gray(const std::filesystem::path& path);
// Mask PNGs store foreground as 255 and background as 0; anything else is a FormatError.
Mask read_mask(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& image);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace geopix
