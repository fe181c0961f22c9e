#include "geopix/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

#include "geopix/errors.hpp"

namespace geopix {

namespace {

enum class Shape { disk, bar, grid };
constexpr std::array<Shape, 3> kShapes{Shape::disk, Shape::bar, Shape::grid};

struct Color {
    const char* name;
    std::uint8_t r, g, b;
};
constexpr std::array<Color, 5> kPalette{{
    {"red", 200, 45, 40},
    {"green", 40, 170, 60},
    {"blue", 40, 70, 205},
    {"yellow", 225, 205, 40},
    {"white", 238, 238, 238},
}};

constexpr std::array<const char*, 4> kQuadrants{"upper left", "upper right", "lower left", "lower right"};

const char* category_of(Shape s) {
    switch (s) {
        case Shape::disk: return "storage_tank";
        case Shape::bar: return "runway";
        case Shape::grid: return "residential";
    }
    return "";
}

const char* noun_of(Shape s) {
    switch (s) {
        case Shape::disk: return "round tank";
        case Shape::bar: return "straight strip";
        case Shape::grid: return "block of buildings";
    }
    return "";
}

const std::array<const char*, 3>& questions_of(Shape s) {
    static const std::array<const char*, 3> disk{
        "Which structure in this scene could be a storage tank for fuel?",
        "Where might liquids be stored in this area?",
        "Which object here could be a circular water reservoir?",
    };
    static const std::array<const char*, 3> bar{
        "Which part of the image could serve as a runway for small aircraft?",
        "Where is a long straight strip that vehicles could drive along?",
        "Which feature here could be a bridge crossing the terrain?",
    };
    static const std::array<const char*, 3> grid{
        "Where is a planned block of regularly arranged buildings?",
        "Which area looks like a residential district laid out on a grid?",
        "Where would you find a cluster of evenly spaced rooftops?",
    };
    switch (s) {
        case Shape::disk: return disk;
        case Shape::bar: return bar;
        case Shape::grid: return grid;
    }
    return disk;
}

class Canvas {
public:
    Canvas(int size, std::mt19937_64& rng) : image_(size, size), size_(size) {
        std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
        std::uniform_int_distribution<int> jitter(-6, 6);
        const double p1 = phase(rng), p2 = phase(rng);
        const int base_r = 110 + jitter(rng), base_g = 118 + jitter(rng), base_b = 96 + jitter(rng);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double wave = 10.0 * std::sin(0.11 * x + p1) * std::cos(0.09 * y + p2);
                const int n = jitter(rng);
                image_.at(y, x, 0) = clamp8(base_r + wave + n);
                image_.at(y, x, 1) = clamp8(base_g + wave + n);
                image_.at(y, x, 2) = clamp8(base_b + wave + n);
            }
        }
    }

    // Paints the shape inside the quadrant and returns its footprint.
    Mask draw(Shape shape, int quadrant, const Color& color, std::mt19937_64& rng) {
        const int u = size_ / 16;
        const int qx = (quadrant % 2) * 8 * u;
        const int qy = (quadrant / 2) * 8 * u;
        Mask footprint(size_, size_);
        std::uniform_int_distribution<int> coin(0, 1);
        switch (shape) {
            case Shape::disk: {
                const double radius = u * (2.5 + 0.5 * coin(rng));
                const double cx = qx + 4.0 * u + coin(rng) * 0.5 * u;
                const double cy = qy + 4.0 * u + coin(rng) * 0.5 * u;
                for (int y = qy; y < qy + 8 * u; ++y) {
                    for (int x = qx; x < qx + 8 * u; ++x) {
                        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                        if (dx * dx + dy * dy <= radius * radius) footprint.at(y, x) = 1;
                    }
                }
                break;
            }
            case Shape::bar: {
                const int length = (6 + coin(rng)) * u;
                const int thick = 2 * u;
                const int along = u * coin(rng);
                const int across = u * (3 + coin(rng));
                const bool horizontal = coin(rng) == 1;
                const int x0 = qx + (horizontal ? along : across);
                const int y0 = qy + (horizontal ? across : along);
                fill(footprint, x0, y0, horizontal ? length : thick, horizontal ? thick : length);
                break;
            }
            case Shape::grid: {
                const int ox = qx + u * coin(rng);
                const int oy = qy + u * coin(rng);
                for (int by = 0; by < 2; ++by) {
                    for (int bx = 0; bx < 2; ++bx) fill(footprint, ox + bx * 4 * u, oy + by * 4 * u, 3 * u, 3 * u);
                }
                break;
            }
        }
        for (int y = 0; y < size_; ++y) {
            for (int x = 0; x < size_; ++x) {
                if (!footprint.at(y, x)) continue;
                image_.at(y, x, 0) = color.r;
                image_.at(y, x, 1) = color.g;
                image_.at(y, x, 2) = color.b;
            }
        }
        return footprint;
    }

    Image release() { return std::move(image_); }

private:
    static std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

    void fill(Mask& m, int x0, int y0, int w, int h) const {
        for (int y = std::max(y0, 0); y < std::min(y0 + h, size_); ++y) {
            for (int x = std::max(x0, 0); x < std::min(x0 + w, size_); ++x) m.at(y, x) = 1;
        }
    }

    Image image_;
    int size_;
};

}  // namespace

std::vector<AnnotatedImage> synth_images(const SynthConfig& config) {
    if (config.n < 1) throw ConfigError("synth: n must be >= 1");
    if (config.size < 32 || config.size % 32 != 0) throw ConfigError("synth: size must be a positive multiple of 32");
    if (config.empty_fraction < 0.0 || config.empty_fraction > 1.0) throw ConfigError("synth: empty_fraction must lie in [0, 1]");
    if (config.questions_per_image < 1 || config.questions_per_image > 3) throw ConfigError("synth: questions_per_image must be 1..3");

    std::mt19937_64 rng(config.seed);
    const auto n = static_cast<std::size_t>(config.n);
    const auto n_empty = static_cast<std::size_t>(std::lround(config.n * config.empty_fraction));
    const auto n_referring = static_cast<std::size_t>(std::lround(config.n * config.referring_fraction));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> empty(n, false), referring(n, false);
    for (std::size_t i = 0; i < n_empty; ++i) empty[order[i]] = true;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < std::min(n_referring, n); ++i) referring[order[i]] = true;

    std::vector<AnnotatedImage> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Canvas canvas(config.size, rng);
        const Shape target = kShapes[i % kShapes.size()];
        std::array<int, 4> quadrants{0, 1, 2, 3};
        std::shuffle(quadrants.begin(), quadrants.end(), rng);
        const Color& color = kPalette[rng() % kPalette.size()];

        AnnotatedImage item;
        char id[64];
        std::snprintf(id, sizeof(id), "synth_%s_%04zu", std::string(to_string(config.split)).c_str(), i);
        item.id = id;
        item.category = category_of(target);
        item.task = referring[i] ? Task::referring : Task::reasoning;

        // Distractors never share the queried shape.
        std::vector<Shape> others;
        for (Shape s : kShapes) {
            if (s != target) others.push_back(s);
        }
        if (empty[i]) {
            item.mask = Mask(config.size, config.size);
            for (std::size_t k = 0; k < others.size(); ++k) {
                canvas.draw(others[k], quadrants[k], kPalette[rng() % kPalette.size()], rng);
            }
        } else {
            item.mask = canvas.draw(target, quadrants[0], color, rng);
            canvas.draw(others[rng() % others.size()], quadrants[1], kPalette[rng() % kPalette.size()], rng);
        }
        item.image = canvas.release();

        const auto& questions = questions_of(target);
        const std::size_t first = rng() % questions.size();
        for (int q = 0; q < config.questions_per_image; ++q) {
            if (item.task == Task::referring) {
                const char* where = empty[i] ? kQuadrants[quadrants[3]] : kQuadrants[quadrants[0]];
                item.instructions.push_back(std::string("the ") + color.name + " " + noun_of(target) + " in the " + where);
            } else {
                item.instructions.emplace_back(questions[(first + q) % questions.size()]);
            }
        }
        if (item.task == Task::reasoning) {
            if (empty[i]) {
                item.answers.push_back(std::string("There is no ") + noun_of(target) + " in this image.");
            } else {
                item.answers.push_back(std::string("The ") + color.name + " " + noun_of(target) + " in the " +
                                       kQuadrants[quadrants[0]] + " fits the request.");
            }
        }
        out.push_back(std::move(item));
    }
    return out;
}

DatasetManifest synth_dataset(const std::filesystem::path& root, const SynthConfig& config) {
    const auto images = synth_images(config);
    write_split(root, config.split, images);
    return load_manifest(root, config.split);
}

Image periodic_texture(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    // A small random tile repeated across the frame, like crop rows or roof grids.
    const int period = 8;
    std::uniform_int_distribution<int> level(0, 3);
    std::array<std::array<int, period>, period> tile{};
    for (auto& row : tile) {
        for (auto& v : row) v = 60 + 40 * level(rng);
    }
    Image image(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const auto v = static_cast<std::uint8_t>(tile[y % period][x % period]);
            image.at(y, x, 0) = v;
            image.at(y, x, 1) = v;
            image.at(y, x, 2) = v;
        }
    }
    return image;
}

Image white_noise(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Image image(size, size);
    for (auto& p : image.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
    return image;
}

}  // namespace geopix
