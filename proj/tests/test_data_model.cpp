#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "geopix/dataset.hpp"
#include "geopix/errors.hpp"
#include "geopix/preprocess.hpp"
#include "geopix/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace geopix;
namespace fs = std::filesystem;

namespace {

Image gradient_image(int h, int w) {
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = static_cast<std::uint8_t>(x % 256);
            img.at(y, x, 1) = static_cast<std::uint8_t>(y % 256);
            img.at(y, x, 2) = static_cast<std::uint8_t>((x + y) % 256);
        }
    }
    return img;
}

Mask disk_mask(int h, int w, double cy, double cx, double r) {
    Mask m(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
            m.at(y, x) = dy * dy + dx * dx <= r * r;
        }
    }
    return m;
}

std::vector<int> to_ints(const Mask& m) { return {m.values.begin(), m.values.end()}; }

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<AnnotatedImage> three_records() {
    std::vector<AnnotatedImage> out;
    for (int i = 0; i < 3; ++i) {
        AnnotatedImage a;
        a.id = "rec" + std::to_string(i);
        a.image = gradient_image(40, 48);
        a.mask = i == 1 ? Mask(40, 48) : disk_mask(40, 48, 20, 24, 6 + i);
        a.instructions = {"Where is the round tank?", "Which object stores liquid?"};
        a.answers = {"The tank is in the middle."};
        a.category = i == 2 ? "bridge" : "storage_tank";
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace

TEST_CASE("image and mask files round-trip") {
    test::TempDir dir;
    const Image img = gradient_image(17, 23);
    write_png(dir / "a.png", img);
    const Image back = read_image(dir / "a.png");
    CHECK(back.height == 17);
    CHECK(back.width == 23);
    CHECK(back.pixels == img.pixels);

    const Mask m = disk_mask(9, 11, 4, 5, 3);
    write_mask_png(dir / "m.png", m);
    CHECK(read_mask(dir / "m.png") == m);
}

TEST_CASE("mask decoding rejects values outside {0, 255}") {
    test::TempDir dir;
    cv::Mat mat(4, 4, CV_8UC1, cv::Scalar(0));
    mat.at<std::uint8_t>(1, 2) = 128;
    cv::imwrite((dir / "bad.png").string(), mat);
    CHECK_THROWS_AS(read_mask(dir / "bad.png"), FormatError);
    CHECK_THROWS_AS(read_image(dir / "missing.png"), IngestionError);
}

TEST_CASE("load_manifest reads a three-record split") {
    test::TempDir dir;
    const auto records = three_records();
    write_split(dir.path(), Split::val, records);
    const DatasetManifest m = load_manifest(dir.path(), Split::val);
    REQUIRE(m.records.size() == 3);
    CHECK(m.split == Split::val);

    std::size_t by_category = 0, by_task = 0;
    for (const auto& [k, v] : m.stats.per_category) by_category += v;
    for (const auto& [k, v] : m.stats.per_task) by_task += v;
    CHECK(by_category == 3);
    CHECK(by_task == 3);
    CHECK(m.stats.per_category.at("bridge") == 1);

    for (const auto& r : m.records) CHECK(r.is_empty_target == (r.id == "rec1"));
    const ImageSample s = m.materialize({1, 0});
    CHECK(s.is_empty_target);
    CHECK(s.mask.foreground() == 0);
    CHECK(s.mask.height == 40);
    CHECK_NOTHROW(s.validate());

    const auto annotations = nlohmann::json::parse(read_bytes(dir / "val/annotations.json"));
    CHECK(annotations.at("rec1").at("mask").is_null());
}

TEST_CASE("an all-zero mask file also marks an empty target") {
    test::TempDir dir;
    write_split(dir.path(), Split::train, three_records());
    auto j = nlohmann::json::parse(read_bytes(dir / "train/annotations.json"));
    write_mask_png(dir / "train/masks/zero.png", Mask(40, 48));
    j["rec0"]["mask"] = "masks/zero.png";
    std::ofstream(dir / "train/annotations.json") << j.dump();
    const DatasetManifest m = load_manifest(dir.path(), Split::train);
    CHECK(m.records[0].is_empty_target);
}

TEST_CASE("load_manifest errors name the record") {
    test::TempDir dir;
    write_split(dir.path(), Split::test, three_records());

    SUBCASE("missing image") {
        auto j = nlohmann::json::parse(read_bytes(dir / "test/annotations.json"));
        j["rec2"]["image"] = "images/nowhere.png";
        std::ofstream(dir / "test/annotations.json") << j.dump();
        try {
            load_manifest(dir.path(), Split::test);
            FAIL("expected IngestionError");
        } catch (const IngestionError& e) {
            CHECK(std::string(e.what()).find("rec2") != std::string::npos);
        }
    }
    SUBCASE("mask with a gray value") {
        cv::Mat mat(40, 48, CV_8UC1, cv::Scalar(0));
        mat.at<std::uint8_t>(3, 3) = 7;
        cv::imwrite((dir / "test/masks/rec0.png").string(), mat);
        try {
            load_manifest(dir.path(), Split::test);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("rec0") != std::string::npos);
        }
    }
    SUBCASE("missing split directory") {
        CHECK_THROWS_AS(load_manifest(dir.path(), Split::val), IngestionError);
    }
}

TEST_CASE("question modes") {
    test::TempDir dir;
    write_split(dir.path(), Split::train, three_records());
    DatasetManifest flat = load_manifest(dir.path(), Split::train);
    CHECK(flat.samples().size() == 6);
    const ImageSample s = flat.materialize({0, 1});
    CHECK(s.instruction == "Which object stores liquid?");
    CHECK(s.answer == "The tank is in the middle.");

    DatasetManifest per_epoch = load_manifest(dir.path(), Split::train, {QuestionMode::sample_per_epoch});
    CHECK(per_epoch.samples(3).size() == 3);
    bool varies = false;
    const auto first = per_epoch.samples(0);
    for (std::uint64_t e = 1; e < 16 && !varies; ++e) {
        const auto other = per_epoch.samples(e);
        for (std::size_t i = 0; i < first.size(); ++i) varies |= other[i].question != first[i].question;
    }
    CHECK(varies);
}

TEST_CASE("published EarthReason split sizes") {
    CHECK(kEarthReasonSplitSizes[0] == 2371);
    CHECK(kEarthReasonSplitSizes[1] == 1135);
    CHECK(kEarthReasonSplitSizes[2] == 1928);
}

TEST_CASE("task and split parsing") {
    CHECK(parse_task("referring") == Task::referring);
    CHECK(parse_split("val") == Split::val);
    CHECK(to_string(Split::test) == "test");
    CHECK_THROWS_AS(parse_task("panoptic"), ConfigError);
    CHECK_THROWS_AS(parse_split("dev"), ConfigError);
}

TEST_CASE("preprocess geometry for a 500x1000 image at 1024") {
    ImageSample s;
    s.id = "wide";
    s.image = gradient_image(500, 1000);
    s.mask = Mask(500, 1000, 1);
    s.instruction = "x";
    const PreprocessedSample p = preprocess(s, 1024);
    CHECK(p.size == 1024);
    CHECK(p.scale_factor == doctest::Approx(1.024));
    CHECK(p.valid_region == Rect{0, 0, 1024, 512});
    CHECK(p.source_height == 500);
    CHECK(p.source_width == 1000);
    CHECK(p.source_id == "wide");
    // Short axis padded on rows 512..1023, zero after normalization, mask background.
    for (int c = 0; c < 3; ++c) {
        for (int y : {512, 700, 1023}) {
            for (int x : {0, 511, 1023}) {
                CHECK(p.image[(static_cast<std::size_t>(c) * 1024 + y) * 1024 + x] == 0.0f);
                CHECK(p.mask.at(y, x) == 0);
            }
        }
    }
    CHECK(p.mask.at(511, 1023) == 1);
    CHECK(p.mask.foreground() == 512u * 1024u);
}

TEST_CASE("preprocess is the identity geometry on an already-sized square") {
    ImageSample s;
    s.id = "sq";
    s.image = gradient_image(64, 64);
    s.mask = disk_mask(64, 64, 30, 20, 9);
    s.instruction = "x";
    const Normalization norm;
    const PreprocessedSample p = preprocess(s, 64, norm);
    CHECK(p.scale_factor == 1.0);
    CHECK(p.valid_region == Rect{0, 0, 64, 64});
    CHECK(p.mask == s.mask);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 64; y += 7) {
            for (int x = 0; x < 64; x += 5) {
                const double expected = (s.image.at(y, x, c) - norm.mean[c]) / norm.stddev[c];
                CHECK(p.image[(static_cast<std::size_t>(c) * 64 + y) * 64 + x] == doctest::Approx(expected).epsilon(1e-6));
            }
        }
    }
    CHECK(restore_mask(p.mask, p) == s.mask);
}

TEST_CASE("preprocess rejects sizes that are not multiples of 32") {
    ImageSample s;
    s.image = gradient_image(10, 10);
    s.mask = Mask(10, 10);
    s.instruction = "x";
    CHECK_THROWS_AS(preprocess(s, 100), ConfigError);
}

TEST_CASE("mask round-trip through preprocess keeps IoU >= 0.98") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 24; ++trial) {
        // Odd trials: 1024 target with sources up to twice as large. Even trials: small
        // targets that only upscale.
        const int target = trial % 2 ? 1024 : (trial % 4 ? 256 : 128);
        std::uniform_int_distribution<int> side(trial % 2 ? 512 : target / 2, trial % 2 ? 2048 : target);
        const int h = side(rng), w = side(rng);
        std::uniform_real_distribution<double> cy(0.3 * h, 0.7 * h), cx(0.3 * w, 0.7 * w);
        std::uniform_real_distribution<double> r(0.12 * std::min(h, w), 0.3 * std::min(h, w));
        ImageSample s;
        s.id = "blob";
        s.image = Image(h, w);
        s.mask = disk_mask(h, w, cy(rng), cx(rng), r(rng));
        s.instruction = "x";
        const PreprocessedSample p = preprocess(s, target);

        CHECK(std::abs(p.valid_region.height - h * p.scale_factor) <= 1.0);
        CHECK(std::abs(p.valid_region.width - w * p.scale_factor) <= 1.0);

        const double expected = s.mask.foreground() * p.scale_factor * p.scale_factor;
        CHECK(p.mask.foreground() >= 0.9 * expected);
        CHECK(p.mask.foreground() <= 1.1 * expected);

        const Mask back = restore_mask(p.mask, p);
        REQUIRE(back.same_shape(s.mask));
        const auto iou = oracle::metrics({to_ints(back)}, {to_ints(s.mask)}).giou;
        CHECK(iou >= 0.98);
    }
}

TEST_CASE("synthetic dataset is deterministic and validates") {
    test::TempDir a, b;
    SynthConfig cfg;
    cfg.n = 8;
    cfg.seed = 0;
    const DatasetManifest ma = synth_dataset(a.path(), cfg);
    synth_dataset(b.path(), cfg);
    REQUIRE(ma.records.size() == 8);
    CHECK(read_bytes(a / "train/annotations.json") == read_bytes(b / "train/annotations.json"));
    for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), a.path());
        CHECK(read_bytes(entry.path()) == read_bytes(b.path() / rel));
    }

    std::size_t empty = 0;
    for (const auto& r : ma.records) {
        empty += r.is_empty_target;
        CHECK(r.category.has_value());
        CHECK(r.height == 64);
        const ImageSample s = ma.materialize({static_cast<std::size_t>(&r - ma.records.data()), 0});
        CHECK_NOTHROW(s.validate());
        CHECK(s.answer.has_value());
    }
    CHECK(empty == 2);
}

TEST_CASE("synthetic generator options") {
    SynthConfig cfg;
    cfg.n = 12;
    cfg.seed = 5;
    cfg.empty_fraction = 0.5;
    cfg.referring_fraction = 0.25;
    cfg.questions_per_image = 3;
    const auto images = synth_images(cfg);
    std::size_t empty = 0, referring = 0;
    for (const auto& a : images) {
        empty += a.mask.foreground() == 0;
        referring += a.task == Task::referring;
        CHECK(a.instructions.size() == 3);
    }
    CHECK(empty == 6);
    CHECK(referring == 3);

    cfg.seed = 6;
    const auto other = synth_images(cfg);
    bool differs = false;
    for (std::size_t i = 0; i < images.size(); ++i) differs |= images[i].image.pixels != other[i].image.pixels;
    CHECK(differs);

    cfg.size = 48;
    CHECK_THROWS_AS(synth_images(cfg), ConfigError);
    cfg.size = 64;
    cfg.n = 0;
    CHECK_THROWS_AS(synth_images(cfg), ConfigError);
}
