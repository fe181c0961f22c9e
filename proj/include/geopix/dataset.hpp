#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geopix/image.hpp"

namespace geopix {

enum class Task { reasoning, referring };
enum class Split { train, val, test };

std::string_view to_string(Task task);
std::string_view to_string(Split split);
Task parse_task(std::string_view text);
Split parse_split(std::string_view text);

// Published EarthReason split sizes (images), train/val/test.
inline constexpr std::array<std::size_t, 3> kEarthReasonSplitSizes{2371, 1135, 1928};

// One decoded (image, instruction) training or evaluation example.
struct ImageSample {
    std::string id;
    Image image;
    Mask mask;
    std::string instruction;
    std::optional<std::string> answer;
    Task task = Task::reasoning;
    std::optional<std::string> category;
    bool is_empty_target = false;

    // Throws FormatError when an invariant does not hold.
    void validate() const;
};

// An image with all of its annotations, as stored in a split's annotations.json.
struct DatasetRecord {
    std::string id;
    std::filesystem::path image_path;
    std::optional<std::filesystem::path> mask_path;  // nullopt: empty target
    std::vector<std::string> instructions;
    std::vector<std::string> answers;
    Task task = Task::reasoning;
    std::optional<std::string> category;
    int height = 0;
    int width = 0;
    bool is_empty_target = false;
};

// How several questions attached to one image become samples.
enum class QuestionMode {
    flatten,           // every (image, question) pair is its own sample
    sample_per_epoch,  // one question per image, redrawn each epoch
};

struct SampleRef {
    std::size_t record = 0;
    std::size_t question = 0;
};

struct DatasetStats {
    std::map<std::string, std::size_t> per_category;
    std::map<std::string, std::size_t> per_task;
};

struct DatasetManifest {
    std::filesystem::path root;
    Split split = Split::train;
    std::vector<DatasetRecord> records;
    DatasetStats stats;
    QuestionMode question_mode = QuestionMode::flatten;

    // Sample list for one epoch; epoch_seed only matters for sample_per_epoch.
    std::vector<SampleRef> samples(std::uint64_t epoch_seed = 0) const;
    ImageSample materialize(const SampleRef& ref) const;
    std::size_t size() const { return records.size(); }
};

struct ManifestOptions {
    QuestionMode question_mode = QuestionMode::flatten;
};

// Reads <root>/<split>/annotations.json and validates every image and mask it references.
DatasetManifest load_manifest(const std::filesystem::path& root, Split split, const ManifestOptions& options = {});

// In-memory form used to write a split to disk.
struct AnnotatedImage {
    std::string id;
    Image image;
    Mask mask;
    std::vector<std::string> instructions;
    std::vector<std::string> answers;
    Task task = Task::reasoning;
    std::string category;
};

// Writes <root>/<split>/{images,masks,annotations.json}. Empty masks are stored as "mask": null.
void write_split(const std::filesystem::path& root, Split split, std::span<const AnnotatedImage> images);

DatasetStats compute_stats(std::span<const DatasetRecord> records);

}  // namespace geopix
