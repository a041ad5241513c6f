#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "openvision/config.hpp"
#include "openvision/eval.hpp"
#include "openvision/mllm.hpp"
#include "openvision/objectives.hpp"
#include "openvision/probe.hpp"
#include "openvision/shard.hpp"
#include "openvision/trainer.hpp"

namespace py = pybind11;
using namespace openvision;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor<T> t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::array_t<float> image_to_array(const Image& img) {
  py::array_t<float> a({img.height, img.width, 3});
  std::copy(img.pixels.begin(), img.pixels.end(), a.mutable_data());
  return a;
}

Image array_to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw py::value_error("expected an H x W x 3 array");
  }
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

py::dict report_dict(const GradReport& r) {
  py::dict d;
  d["pass"] = r.pass;
  d["max_rel_error"] = r.max_rel_error;
  d["max_abs_error"] = r.max_abs_error;
  py::list tensors;
  for (const auto& t : r.tensors) {
    py::dict e;
    e["name"] = t.name;
    e["probes"] = t.probes;
    e["max_rel_error"] = t.max_rel_error;
    e["pass"] = t.pass;
    tensors.append(e);
  }
  d["tensors"] = tensors;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Progressive-resolution two-tower pretraining and multimodal finetuning core";

  static py::handle error_type = py::exception<Error>(m, "Error").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) {
        std::rethrow_exception(p);
      }
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("kind") = to_string(e.kind());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<CaptionedImage>(m, "CaptionedImage")
      .def(py::init<>())
      .def_readwrite("id", &CaptionedImage::id)
      .def_property(
          "png", [](const CaptionedImage& r) { return to_bytes(r.png); },
          [](CaptionedImage& r, const py::bytes& b) { r.png = from_bytes(b); })
      .def_readwrite("caption_original", &CaptionedImage::caption_original)
      .def_readwrite("caption_synthetic", &CaptionedImage::caption_synthetic)
      .def_readwrite("meta", &CaptionedImage::meta)
      .def("image", [](const CaptionedImage& r) { return image_to_array(decode_png(r.png)); })
      .def(py::self == py::self)
      .def("__repr__", [](const CaptionedImage& r) {
        return "<CaptionedImage id=" + std::to_string(r.id) + " '" + r.caption_original + "'>";
      });

  m.def(
      "gen_probe_dataset",
      [](std::uint64_t seed, int n, int resolution, bool stratified) {
        return gen_probe_dataset(seed, n, resolution, {.stratified = stratified});
      },
      py::arg("seed"), py::arg("n"), py::arg("resolution") = 128, py::arg("stratified") = false);
  m.def("probe_class_names", &probe_class_names);

  m.def("serialize_shard", [](const std::vector<CaptionedImage>& r) { return to_bytes(serialize_shard(r)); });
  m.def("parse_shard", [](const py::bytes& b) { return parse_shard(from_bytes(b)); });
  m.def("write_shard", [](const std::filesystem::path& p, const std::vector<CaptionedImage>& r) {
    write_shard(p, r);
  });
  m.def("read_shard", &read_shard);
  m.def("load_records", &load_records);

  m.def("decode_png", [](const py::bytes& b) { return image_to_array(decode_png(from_bytes(b))); });
  m.def("encode_png", [](const FloatArray& a) { return to_bytes(encode_png(array_to_image(a))); });
  m.def("resize", [](const FloatArray& a, int target) { return image_to_array(resize(array_to_image(a), target)); });

  m.def(
      "multi_positive_contrastive",
      [](const DoubleArray& image_emb, const DoubleArray& caption_emb, std::int64_t k, double temperature) {
        return multi_positive_contrastive(ContrastiveBatch<double>{.image_emb = to_tensor(image_emb),
                                                                   .caption_emb = to_tensor(caption_emb),
                                                                   .captions_per_image = k,
                                                                   .temperature = temperature});
      },
      py::arg("image_emb"), py::arg("caption_emb"), py::arg("captions_per_image") = 1,
      py::arg("temperature") = 1.0);

  m.def(
      "grad_check",
      [](const std::string& preset, int batch, std::uint64_t seed, std::int64_t probes, bool use_decoder) {
        LossToggles toggles;
        toggles.use_decoder = use_decoder;
        return report_dict(two_tower_grad_check(ModelConfig::preset(preset), toggles, batch, seed,
                                                {.probes_per_tensor = probes}));
      },
      py::arg("preset") = "micro", py::arg("batch") = 4, py::arg("seed") = 0, py::arg("probes") = 16,
      py::arg("use_decoder") = true);

  py::class_<StageSchedule>(m, "StageSchedule")
      .def(py::init([](int resolution, std::int64_t samples, int batch, double base_lr, std::int64_t warmup) {
             return StageSchedule{resolution, samples, batch, base_lr, warmup};
           }),
           py::arg("resolution"), py::arg("samples"), py::arg("batch"), py::arg("base_lr"),
           py::arg("warmup_samples") = 0)
      .def_readwrite("resolution", &StageSchedule::resolution)
      .def_readwrite("samples", &StageSchedule::samples)
      .def_readwrite("batch", &StageSchedule::batch)
      .def_readwrite("base_lr", &StageSchedule::base_lr)
      .def_readwrite("warmup_samples", &StageSchedule::warmup_samples)
      .def("lr_at", [](const StageSchedule& s, std::int64_t seen) { return lr_at(s, seen); });
  m.def("desk_curriculum", &desk_curriculum);

  m.def("experiment_preset_names", &experiment_preset_names);
  m.def("experiment_preset", [](const std::string& name) {
    std::vector<std::string> out;
    for (const auto& c : experiment_preset(name)) {
      out.push_back(serialize_run_config(c));
    }
    return out;
  });
  m.def(
      "normalize_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return serialize_run_config(parse_run_config(text, overrides));
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "train",
      [](const std::string& config_text, const std::vector<std::string>& overrides,
         const std::filesystem::path& out_dir) {
        const auto config = parse_run_config(config_text, overrides);
        auto options = trainer_options(config);
        std::filesystem::create_directories(out_dir);
        options.log_path = out_dir / "train_log.jsonl";
        std::filesystem::remove(options.log_path);
        TrainState state;
        {
          py::gil_scoped_release release;
          state = run_curriculum(options, config.stages, load_run_records(config),
                                 initial_state(config.model, config.seed));
          export_vision(state.params, final_vision(config), out_dir / "vision.ovck");
          save_state(out_dir / "state.ovck", state);
        }
        py::dict d;
        d["step"] = state.step;
        d["params_hash"] = hash_hex(state.params.hash());
        d["vision"] = (out_dir / "vision.ovck").string();
        d["log"] = options.log_path.string();
        return d;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("out_dir"));

  py::class_<VisionBackbone>(m, "VisionBackbone")
      .def_static("load", &load_vision)
      .def_property_readonly("resolution", [](const VisionBackbone& b) { return b.config.resolution; })
      .def_property_readonly("width", [](const VisionBackbone& b) { return b.config.width; })
      .def_property_readonly("patch", [](const VisionBackbone& b) { return b.config.patch; })
      .def_property_readonly("parameter_count", [](const VisionBackbone& b) { return b.params.count(); })
      .def("embed", [](const VisionBackbone& b, const FloatArray& images) {
        if (images.ndim() != 4 || images.shape(3) != 3) {
          throw py::value_error("expected an N x H x W x 3 array");
        }
        std::vector<Image> list;
        const auto per = images.shape(1) * images.shape(2) * 3;
        for (py::ssize_t i = 0; i < images.shape(0); ++i) {
          Image img(static_cast<int>(images.shape(1)), static_cast<int>(images.shape(2)));
          std::copy(images.data() + i * per, images.data() + (i + 1) * per, img.pixels.begin());
          list.push_back(std::move(img));
        }
        return to_array(embed_images(b.params, b.config, list));
      });

  m.def("retrieval_recall", [](const FloatArray& img, const FloatArray& cap, const std::vector<int>& ks) {
    const auto r = retrieval_recall(to_tensor(img), to_tensor(cap), ks);
    py::dict d;
    d["image_to_text"] = r.image_to_text.recall_at;
    d["text_to_image"] = r.text_to_image.recall_at;
    return d;
  });
  m.def("vqa_exact_match", [](const std::vector<std::string>& p, const std::vector<std::string>& a) {
    return vqa_exact_match(p, a);
  });

  m.def(
      "select_grid",
      [](int height, int width, int base) {
        const auto g = select_grid(height, width, base);
        return std::pair{g.rows, g.cols};
      },
      py::arg("height"), py::arg("width"), py::arg("base") = 336);
  m.def("visual_token_count", &visual_token_count, py::arg("crops"), py::arg("base"), py::arg("patch"));
  m.def(
      "tile",
      [](const FloatArray& a, int rows, int cols, int base) {
        std::vector<py::array_t<float>> out;
        for (const auto& img : tile(array_to_image(a), {rows, cols, base})) {
          out.push_back(image_to_array(img));
        }
        return out;
      },
      py::arg("image"), py::arg("rows"), py::arg("cols"), py::arg("base") = 336);
}
