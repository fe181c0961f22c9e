#include "geopix/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "geopix/errors.hpp"

namespace geopix {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Task task) {
    return task == Task::reasoning ? "reasoning" : "referring";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Task parse_task(std::string_view text) {
    if (text == "reasoning") return Task::reasoning;
    if (text == "referring") return Task::referring;
    throw ConfigError("unknown task '" + std::string(text) + "' (expected reasoning or referring)");
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "val") return Split::val;
    if (text == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(text) + "' (expected train, val or test)");
}

void ImageSample::validate() const {
    if (image.height != mask.height || image.width != mask.width) {
        throw FormatError("sample " + id + ": image and mask dimensions differ");
    }
    if (image.empty()) {
        throw FormatError("sample " + id + ": empty image");
    }
    if (instruction.empty()) {
        throw FormatError("sample " + id + ": empty instruction");
    }
    if (is_empty_target != (mask.foreground() == 0)) {
        throw FormatError("sample " + id + ": is_empty_target disagrees with mask content");
    }
}

std::vector<SampleRef> DatasetManifest::samples(std::uint64_t epoch_seed) const {
    std::vector<SampleRef> refs;
    if (question_mode == QuestionMode::flatten) {
        for (std::size_t r = 0; r < records.size(); ++r) {
            for (std::size_t q = 0; q < records[r].instructions.size(); ++q) refs.push_back({r, q});
        }
        return refs;
    }
    std::mt19937_64 rng(epoch_seed);
    for (std::size_t r = 0; r < records.size(); ++r) {
        const std::size_t n = records[r].instructions.size();
        refs.push_back({r, static_cast<std::size_t>(rng() % n)});
    }
    return refs;
}

ImageSample DatasetManifest::materialize(const SampleRef& ref) const {
    const DatasetRecord& record = records.at(ref.record);
    ImageSample sample;
    sample.id = record.id;
    try {
        sample.image = read_image(record.image_path);
        sample.mask = record.mask_path ? read_mask(*record.mask_path) : Mask(sample.image.height, sample.image.width);
    } catch (const IngestionError& e) {
        throw IngestionError("record " + record.id + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError("record " + record.id + ": " + e.what());
    }
    sample.instruction = record.instructions.at(ref.question);
    if (!record.answers.empty()) {
        sample.answer = record.answers[ref.question % record.answers.size()];
    }
    sample.task = record.task;
    sample.category = record.category;
    sample.is_empty_target = sample.mask.foreground() == 0;
    return sample;
}

DatasetStats compute_stats(std::span<const DatasetRecord> records) {
    DatasetStats stats;
    for (const auto& record : records) {
        ++stats.per_category[record.category.value_or("uncategorized")];
        ++stats.per_task[std::string(to_string(record.task))];
    }
    return stats;
}

namespace {

std::vector<std::string> string_list(const json& entry, const char* plural, const char* singular) {
    std::vector<std::string> out;
    if (entry.contains(plural)) {
        for (const auto& v : entry.at(plural)) out.push_back(v.get<std::string>());
    } else if (entry.contains(singular) && !entry.at(singular).is_null()) {
        out.push_back(entry.at(singular).get<std::string>());
    }
    return out;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, Split split, const ManifestOptions& options) {
    const fs::path split_dir = root / to_string(split);
    const fs::path annotations = split_dir / "annotations.json";
    for (const fs::path& required : {split_dir / "images", split_dir / "masks", annotations}) {
        if (!fs::exists(required)) {
            throw IngestionError("dataset path not found: " + required.string());
        }
    }
    json doc;
    {
        std::ifstream in(annotations);
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw FormatError(annotations.string() + ": " + e.what());
        }
    }
    if (!doc.is_object()) {
        throw FormatError(annotations.string() + ": expected an object mapping id to record");
    }

    DatasetManifest manifest;
    manifest.root = root;
    manifest.split = split;
    manifest.question_mode = options.question_mode;
    for (const auto& [id, entry] : doc.items()) {
        DatasetRecord record;
        record.id = id;
        try {
            record.image_path = split_dir / entry.at("image").get<std::string>();
            if (entry.contains("mask") && !entry.at("mask").is_null()) {
                record.mask_path = split_dir / entry.at("mask").get<std::string>();
            }
            record.instructions = string_list(entry, "instructions", "instruction");
            record.answers = string_list(entry, "answers", "answer");
            record.task = parse_task(entry.value("task", std::string("reasoning")));
            if (entry.contains("category") && !entry.at("category").is_null()) {
                record.category = entry.at("category").get<std::string>();
            }
        } catch (const json::exception& e) {
            throw FormatError("record " + id + ": " + e.what());
        } catch (const ConfigError& e) {
            throw FormatError("record " + id + ": " + e.what());
        }
        if (record.instructions.empty() ||
            std::any_of(record.instructions.begin(), record.instructions.end(), [](const auto& s) { return s.empty(); })) {
            throw FormatError("record " + id + ": instructions must be non-empty");
        }

        Image image;
        Mask mask;
        try {
            image = read_image(record.image_path);
            mask = record.mask_path ? read_mask(*record.mask_path) : Mask(image.height, image.width);
        } catch (const IngestionError& e) {
            throw IngestionError("record " + id + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError("record " + id + ": " + e.what());
        }
        if (!mask.same_shape(Mask(image.height, image.width))) {
            throw FormatError("record " + id + ": mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                              " but image is " + std::to_string(image.height) + "x" + std::to_string(image.width));
        }
        record.height = image.height;
        record.width = image.width;
        record.is_empty_target = mask.foreground() == 0;
        manifest.records.push_back(std::move(record));
    }
    manifest.stats = compute_stats(manifest.records);
    return manifest;
}

void write_split(const fs::path& root, Split split, std::span<const AnnotatedImage> images) {
    const fs::path split_dir = root / to_string(split);
    fs::create_directories(split_dir / "images");
    fs::create_directories(split_dir / "masks");
    json doc = json::object();
    for (const auto& item : images) {
        const std::string image_rel = "images/" + item.id + ".png";
        write_png(split_dir / image_rel, item.image);
        json entry;
        entry["image"] = image_rel;
        if (item.mask.foreground() == 0) {
            entry["mask"] = nullptr;
        } else {
            const std::string mask_rel = "masks/" + item.id + ".png";
            write_mask_png(split_dir / mask_rel, item.mask);
            entry["mask"] = mask_rel;
        }
        entry["instructions"] = item.instructions;
        entry["answers"] = item.answers;
        entry["task"] = std::string(to_string(item.task));
        entry["category"] = item.category;
        doc[item.id] = std::move(entry);
    }
    std::ofstream out(split_dir / "annotations.json");
    out << doc.dump(2) << '\n';
}

}  // namespace geopix
