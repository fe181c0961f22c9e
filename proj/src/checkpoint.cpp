#include "geopix/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "geopix/errors.hpp"

namespace geopix {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'E', 'O', 'P', 'I', 'X', 'C', 'K'};

std::string dtype_name(torch::Dtype t) {
    switch (t) {
        case torch::kFloat32: return "f32";
        case torch::kFloat64: return "f64";
        case torch::kBFloat16: return "bf16";
        case torch::kInt64: return "i64";
        default: throw CheckpointError("unsupported tensor dtype in checkpoint");
    }
}

torch::Dtype parse_dtype(const std::string& s) {
    if (s == "f32") return torch::kFloat32;
    if (s == "f64") return torch::kFloat64;
    if (s == "bf16") return torch::kBFloat16;
    if (s == "i64") return torch::kInt64;
    throw CheckpointError("unknown tensor dtype '" + s + "'");
}

std::string shape_string(c10::IntArrayRef shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

}  // namespace

const torch::Tensor* CheckpointData::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void write_checkpoint(const fs::path& path, const CheckpointData& data) {
    json header;
    header["format_version"] = kCheckpointVersion;
    header["metadata"] = data.metadata;
    header["tensors"] = json::array();
    std::vector<torch::Tensor> blobs;
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : data.tensors) {
        const auto t = tensor.detach().to(torch::kCPU).contiguous();
        const std::uint64_t nbytes = t.numel() * t.element_size();
        header["tensors"].push_back(
            {{"name", name}, {"dtype", dtype_name(t.scalar_type())}, {"shape", t.sizes().vec()}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
        blobs.push_back(t);
    }
    const std::string text = header.dump();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        const std::uint32_t version = kCheckpointVersion;
        const std::uint64_t header_len = text.size();
        out.write(kMagic, sizeof(kMagic));
        out.write(reinterpret_cast<const char*>(&version), sizeof(version));
        out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& t : blobs) out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
        if (!out) throw CheckpointError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

CheckpointData read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    const auto file_size = fs::file_size(path);
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t header_len = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
    }
    if (version != kCheckpointVersion) {
        throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t prefix = sizeof(magic) + sizeof(version) + sizeof(header_len);
    if (header_len > file_size - prefix) throw CheckpointError(path.string() + ": truncated header");
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": corrupt header: " + e.what());
    }

    const std::uint64_t data_start = prefix + header_len;
    std::uint64_t data_len = 0;
    for (const auto& entry : header.at("tensors")) {
        data_len = std::max<std::uint64_t>(data_len, entry.at("offset").get<std::uint64_t>() + entry.at("nbytes").get<std::uint64_t>());
    }
    if (file_size != data_start + data_len) {
        throw CheckpointError(path.string() + ": expected " + std::to_string(data_start + data_len) + " bytes, found " +
                              std::to_string(file_size) + " (truncated or corrupt)");
    }

    CheckpointData data;
    data.metadata = header.value("metadata", json::object());
    std::vector<char> blob(data_len);
    in.read(blob.data(), static_cast<std::streamsize>(data_len));
    if (!in) throw CheckpointError(path.string() + ": truncated tensor data");
    for (const auto& entry : header.at("tensors")) {
        const auto dtype = parse_dtype(entry.at("dtype").get<std::string>());
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
        auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != nbytes) {
            throw CheckpointError(path.string() + ": tensor " + entry.at("name").get<std::string>() + " has inconsistent size");
        }
        std::memcpy(t.data_ptr(), blob.data() + offset, nbytes);
        data.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
    return data;
}

std::vector<NamedTensor> module_state(const torch::nn::Module& module, const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (const auto& item : module.named_parameters()) out.emplace_back(prefix + item.key(), item.value());
    for (const auto& item : module.named_buffers()) out.emplace_back(prefix + item.key(), item.value());
    return out;
}

void install_state(torch::nn::Module& module, const CheckpointData& data, const std::string& prefix) {
    const auto targets = module_state(module, "");
    std::vector<std::pair<torch::Tensor, const torch::Tensor*>> plan;
    plan.reserve(targets.size());
    for (const auto& [name, target] : targets) {
        const torch::Tensor* source = data.find(prefix + name);
        if (!source) throw CheckpointError("checkpoint is missing parameter " + prefix + name);
        if (source->sizes() != target.sizes()) {
            throw CheckpointError("parameter " + prefix + name + ": checkpoint shape " + shape_string(source->sizes()) +
                                  " does not match model shape " + shape_string(target.sizes()));
        }
        plan.emplace_back(target, source);
    }
    torch::NoGradGuard guard;
    for (auto& [target, source] : plan) target.copy_(source->to(target.scalar_type()));
}

void save_model(const fs::path& path, SegmenterImpl& model, const RunConfig& config, int64_t step, torch::optim::AdamW* optimizer) {
    CheckpointData data;
    RunConfig snapshot = config;
    snapshot.model = model.config();
    data.metadata = {{"kind", "segmenter"}, {"run_config", snapshot}, {"step", step}};
    data.tensors = module_state(model);
    if (optimizer) {
        auto& state = optimizer->state();
        json steps = json::object();
        for (const auto& item : model.named_parameters()) {
            const auto it = state.find(item.value().unsafeGetTensorImpl());
            if (it == state.end()) continue;
            const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
            data.tensors.emplace_back("optimizer/" + item.key() + "/exp_avg", s.exp_avg());
            data.tensors.emplace_back("optimizer/" + item.key() + "/exp_avg_sq", s.exp_avg_sq());
            steps[item.key()] = s.step();
        }
        data.metadata["optimizer"] = {{"type", "adamw"}, {"steps", steps}};
    }
    write_checkpoint(path, data);
}

LoadedModel load_model(const fs::path& path) {
    LoadedModel loaded;
    loaded.data = read_checkpoint(path);
    const auto& meta = loaded.data.metadata;
    if (meta.value("kind", std::string()) != "segmenter") {
        throw CheckpointError(path.string() + ": not a model checkpoint");
    }
    try {
        merge_json(loaded.config, meta.at("run_config"));
    } catch (const std::exception& e) {
        throw CheckpointError(path.string() + ": bad embedded config: " + e.what());
    }
    loaded.step = meta.value("step", int64_t{0});
    loaded.model = Segmenter(loaded.config.model);
    install_state(*loaded.model, loaded.data);
    return loaded;
}

void load_optimizer_state(torch::optim::AdamW& optimizer, SegmenterImpl& model, const CheckpointData& data) {
    if (!data.metadata.contains("optimizer")) return;
    const auto& steps = data.metadata["optimizer"]["steps"];
    auto& state = optimizer.state();
    for (const auto& item : model.named_parameters()) {
        const auto* m = data.find("optimizer/" + item.key() + "/exp_avg");
        const auto* v = data.find("optimizer/" + item.key() + "/exp_avg_sq");
        if (!m || !v || !steps.contains(item.key())) continue;
        auto s = std::make_unique<torch::optim::AdamWParamState>();
        s->step(steps[item.key()].get<int64_t>());
        s->exp_avg(m->to(item.value().scalar_type()).clone());
        s->exp_avg_sq(v->to(item.value().scalar_type()).clone());
        state[item.value().unsafeGetTensorImpl()] = std::move(s);
    }
}

void save_encoder(const fs::path& path, SwinEncoderImpl& encoder) {
    CheckpointData data;
    data.metadata = {{"kind", "encoder"}, {"encoder", encoder.config()}};
    data.tensors = module_state(encoder, "encoder.");
    write_checkpoint(path, data);
}

namespace {

EncoderConfig encoder_config_from(const CheckpointData& data, const fs::path& path) {
    const auto& meta = data.metadata;
    const std::string kind = meta.value("kind", std::string());
    ModelConfig model;
    try {
        if (kind == "encoder") {
            merge_json(model, json{{"encoder", meta.at("encoder")}});
        } else if (kind == "segmenter") {
            merge_json(model, json{{"encoder", meta.at("run_config").at("model").at("encoder")}});
        } else {
            throw CheckpointError("unknown checkpoint kind '" + kind + "'");
        }
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(path.string() + ": bad encoder config: " + e.what());
    }
    return model.encoder;
}

}  // namespace

PretrainedEncoder load_pretrained(const fs::path& path) {
    const CheckpointData data = read_checkpoint(path);
    PretrainedEncoder out;
    out.config = encoder_config_from(data, path);
    out.encoder = SwinEncoder(out.config);
    install_state(*out.encoder, data, "encoder.");
    out.encoder->set_frozen(out.config.frozen);
    return out;
}

void load_pretrained_into(SwinEncoderImpl& encoder, const fs::path& path) {
    const CheckpointData data = read_checkpoint(path);
    install_state(encoder, data, "encoder.");
}

}  // namespace geopix
