#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "geopix/checkpoint.hpp"
#include "geopix/config.hpp"
#include "geopix/connector.hpp"
#include "geopix/errors.hpp"
#include "geopix/losses.hpp"
#include "geopix/metrics.hpp"
#include "geopix/preprocess.hpp"
#include "geopix/redundancy.hpp"
#include "geopix/synth.hpp"
#include "geopix/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace geopix;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

GrayImage gray_from(const U8Array& a) {
    if (a.ndim() == 2) {
        GrayImage g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
        std::copy_n(a.data(), g.pixels.size(), g.pixels.begin());
        return g;
    }
    if (a.ndim() == 3 && a.shape(2) == 3) {
        Image rgb(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
        std::copy_n(a.data(), rgb.pixels.size(), rgb.pixels.begin());
        return to_luminance(rgb);
    }
    throw std::invalid_argument("expected an (H, W) or (H, W, 3) uint8 array");
}

Image rgb_from(const U8Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("expected an (H, W, 3) uint8 array");
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy_n(a.data(), img.pixels.size(), img.pixels.begin());
    return img;
}

Mask mask_from(const U8Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected an (H, W) mask array");
    Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    const auto* src = a.data();
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = src[i] ? 1 : 0;
    return m;
}

U8Array to_array(const Mask& m) {
    U8Array out({m.height, m.width});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

torch::Tensor tensor_from(const F64Array& a) {
    std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
    return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json report_json(const EvalReport& r) {
    nlohmann::json j = r;
    return j;
}

// Trained model handle for inference and evaluation.
class Model {
public:
    explicit Model(const fs::path& checkpoint) : loaded_(load_model(checkpoint)) { loaded_.model->eval(); }

    py::tuple segment(const U8Array& image, const std::string& instruction, const std::string& task, bool generate_text) {
        const Image img = rgb_from(image);
        Segmentation s;
        {
            py::gil_scoped_release release;
            s = geopix::segment(*loaded_.model, img, instruction, parse_task(task), generate_text);
        }
        py::object answer = py::none();
        if (s.answer) {
            // Generated bytes need not form valid UTF-8.
            answer = py::reinterpret_steal<py::object>(
                PyUnicode_DecodeUTF8(s.answer->data(), static_cast<py::ssize_t>(s.answer->size()), "replace"));
        }
        return py::make_tuple(to_array(s.mask), answer);
    }

    py::object evaluate(const fs::path& data_root, const std::string& split, int batch_size) {
        const DatasetManifest manifest = load_manifest(data_root, parse_split(split));
        EvalReport r;
        {
            py::gil_scoped_release release;
            r = geopix::evaluate(*loaded_.model, manifest, {batch_size});
        }
        return from_json(report_json(r));
    }

    py::object config() const { return from_json(nlohmann::json(loaded_.config)); }
    int64_t step() const { return loaded_.step; }

private:
    LoadedModel loaded_;
};

}  // namespace

PYBIND11_MODULE(_geopix, m) {
    m.doc() = "Language-guided remote-sensing segmentation core";

    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<IngestionError>(m, "IngestionError", PyExc_OSError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_FloatingPointError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def(
        "entropic_redundancy", [](const U8Array& image, int levels) { return entropic_redundancy(gray_from(image), levels); },
        py::arg("image"), py::arg("levels") = 256);
    m.def(
        "ssim_matrix",
        [](const U8Array& image, int patch_size) {
            const SSIMMatrix s = ssim_matrix(gray_from(image), patch_size);
            const auto n = static_cast<py::ssize_t>(s.size());
            F64Array out({n, n});
            for (py::ssize_t i = 0; i < n; ++i) {
                for (py::ssize_t j = 0; j < n; ++j) out.mutable_at(i, j) = s.values(i, j);
            }
            return out;
        },
        py::arg("image"), py::arg("patch_size") = 16);
    m.def(
        "structural_redundancy",
        [](const U8Array& image, int patch_size) { return structural_redundancy(ssim_matrix(gray_from(image), patch_size)); },
        py::arg("image"), py::arg("patch_size") = 16);

    m.def(
        "compute_metrics",
        [](const std::vector<U8Array>& predictions, const std::vector<U8Array>& truths) {
            std::vector<Mask> p, t;
            for (const auto& a : predictions) p.push_back(mask_from(a));
            for (const auto& a : truths) t.push_back(mask_from(a));
            return from_json(report_json(compute_metrics(p, t)));
        },
        py::arg("predictions"), py::arg("truths"));

    m.def(
        "focal_loss",
        [](const F64Array& logits, const F64Array& target, double alpha, double gamma) {
            return focal_loss(tensor_from(logits), tensor_from(target), alpha, gamma).item<double>();
        },
        py::arg("logits"), py::arg("target"), py::arg("alpha") = 0.25, py::arg("gamma") = 2.0);
    m.def(
        "dice_loss",
        [](const F64Array& probabilities, const F64Array& target, double smooth) {
            return dice_loss(tensor_from(probabilities), tensor_from(target), smooth).item<double>();
        },
        py::arg("probabilities"), py::arg("target"), py::arg("smooth") = 1.0);

    m.def(
        "token_count",
        [](int depth, int image_size) {
            ConnectorConfig c;
            c.depth = depth;
            return c.token_count(image_size);
        },
        py::arg("depth"), py::arg("image_size") = 1024);

    m.def(
        "preprocess_geometry",
        [](int height, int width, int target_size) {
            const PreprocessedSample s = preprocess_image(Image(height, width), target_size);
            py::dict d;
            d["scale_factor"] = s.scale_factor;
            d["valid_region"] = py::make_tuple(s.valid_region.x, s.valid_region.y, s.valid_region.width, s.valid_region.height);
            d["size"] = s.size;
            return d;
        },
        py::arg("height"), py::arg("width"), py::arg("target_size") = 1024);

    m.def(
        "synth_dataset",
        [](const fs::path& root, int n, int size, std::uint64_t seed, double empty_fraction, double referring_fraction,
           int questions_per_image, const std::string& split) {
            SynthConfig c;
            c.n = n;
            c.size = size;
            c.seed = seed;
            c.empty_fraction = empty_fraction;
            c.referring_fraction = referring_fraction;
            c.questions_per_image = questions_per_image;
            c.split = parse_split(split);
            return synth_dataset(root, c).records.size();
        },
        py::arg("root"), py::arg("n") = 8, py::arg("size") = 64, py::arg("seed") = 0, py::arg("empty_fraction") = 0.25,
        py::arg("referring_fraction") = 0.0, py::arg("questions_per_image") = 1, py::arg("split") = "train");

    m.def(
        "default_config", [] { return from_json(nlohmann::json(RunConfig{})); },
        "Fully resolved default run configuration as a dict.");

    m.def(
        "_train",
        [](const std::string& config_json) {
            RunConfig config;
            merge_json(config, nlohmann::json::parse(config_json));
            config.validate();
            const DatasetManifest manifest =
                load_manifest(config.data.root, parse_split(config.data.train_split), {config.train.question_mode});
            TrainResult result;
            {
                py::gil_scoped_release release;
                result = train(build_model(config), manifest, config, {config.output_dir, {}});
            }
            py::list curve;
            for (const auto& r : result.curve) {
                py::dict d;
                d["step"] = r.step;
                d["lr"] = r.lr;
                d["total"] = r.total;
                d["focal"] = r.focal;
                d["dice"] = r.dice;
                d["text_ce"] = r.text_ce;
                curve.append(d);
            }
            return curve;
        },
        py::arg("config_json"));

    py::class_<Model>(m, "Model")
        .def(py::init<const fs::path&>(), py::arg("checkpoint"))
        .def("segment", &Model::segment, py::arg("image"), py::arg("instruction"), py::arg("task") = "reasoning",
             py::arg("generate_text") = true, "Returns (mask, answer) with the mask at the input resolution.")
        .def("evaluate", &Model::evaluate, py::arg("data_root"), py::arg("split") = "val", py::arg("batch_size") = 8)
        .def_property_readonly("config", &Model::config)
        .def_property_readonly("step", &Model::step);
}
