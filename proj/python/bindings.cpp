#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "patchcraft/checkpoint.hpp"
#include "patchcraft/cli.hpp"
#include "patchcraft/errors.hpp"
#include "patchcraft/image.hpp"
#include "patchcraft/ops.hpp"
#include "patchcraft/trainer.hpp"
#include "patchcraft/vit.hpp"

namespace py = pybind11;
namespace pc = patchcraft;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

pc::Tensor to_tensor(const FloatArray& a) {
  pc::Shape shape(a.shape(), a.shape() + a.ndim());
  return pc::Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const pc::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

pc::Image to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw pc::InputError("expected an image array of shape (height, width, 3)");
  }
  pc::Image img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

FloatArray from_image(const pc::Image& img) {
  FloatArray out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width),
                  static_cast<py::ssize_t>(pc::Image::kChannels)});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

// A checkpoint held in memory for repeated prediction.
struct Model {
  pc::Checkpoint ckpt;

  std::vector<double> predict_proba(const FloatArray& image) const {
    const pc::Image img =
        pc::normalize(pc::resize(to_image(image), ckpt.model_config.image_size), ckpt.norm_stats);
    return pc::predict_probabilities(ckpt.params, ckpt.model_config, std::span(&img, 1)).at(0);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Vision transformer image classification toolkit";

  auto base = py::register_exception<pc::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<pc::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<pc::ContractError>(m, "ContractError", base.ptr());
  py::register_exception<pc::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<pc::InputError>(m, "InputError", base.ptr());
  py::register_exception<pc::DatasetError>(m, "DatasetError", base.ptr());
  py::register_exception<pc::TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<pc::CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<pc::ParseError>(m, "ParseError", base.ptr());

  m.def("matmul", [](const FloatArray& a, const FloatArray& b) {
    return to_array(pc::ops::matmul(to_tensor(a), to_tensor(b)));
  });
  m.def(
      "softmax",
      [](const FloatArray& x, std::size_t axis) { return to_array(pc::ops::softmax(to_tensor(x), axis)); },
      py::arg("x"), py::arg("axis") = 1);
  m.def(
      "layer_norm",
      [](const FloatArray& x, const FloatArray& gamma, const FloatArray& beta, float eps) {
        return to_array(pc::ops::layer_norm(to_tensor(x), to_tensor(gamma), to_tensor(beta), eps));
      },
      py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("eps") = 1e-6f);
  m.def("gelu", [](const FloatArray& x) { return to_array(pc::ops::gelu(to_tensor(x))); });
  m.def(
      "attention",
      [](const FloatArray& q, const FloatArray& k, const FloatArray& v, std::size_t batch,
         std::size_t heads) {
        std::vector<float> probs;
        const pc::Tensor out =
            pc::ops::attention(to_tensor(q), to_tensor(k), to_tensor(v), batch, heads, &probs);
        const auto tokens = static_cast<py::ssize_t>(q.shape(0) / static_cast<py::ssize_t>(batch));
        FloatArray p({static_cast<py::ssize_t>(batch), static_cast<py::ssize_t>(heads), tokens, tokens});
        std::copy(probs.begin(), probs.end(), p.mutable_data());
        return py::make_tuple(to_array(out), p);
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("batch") = 1, py::arg("heads") = 1,
      "Scaled dot-product attention; returns (output, probabilities[batch, head, query, key]).");
  m.def("cross_entropy", [](const FloatArray& logits, const std::vector<std::size_t>& labels) {
    return pc::cross_entropy(to_tensor(logits), labels).item();
  });

  m.def(
      "patchify",
      [](const FloatArray& image, std::size_t patch) {
        return to_array(pc::patchify<float>(to_image(image), patch));
      },
      py::arg("image"), py::arg("patch_size"));
  m.def("read_image", [](const std::filesystem::path& p) { return from_image(pc::read_image(p)); });
  m.def("resize", [](const FloatArray& image, std::size_t size) {
    return from_image(pc::resize(to_image(image), size));
  });

  py::class_<pc::ViTConfig>(m, "ViTConfig")
      .def(py::init<>())
      .def_readwrite("image_size", &pc::ViTConfig::image_size)
      .def_readwrite("patch_size", &pc::ViTConfig::patch_size)
      .def_readwrite("projection_dim", &pc::ViTConfig::projection_dim)
      .def_readwrite("num_heads", &pc::ViTConfig::num_heads)
      .def_readwrite("num_layers", &pc::ViTConfig::num_layers)
      .def_readwrite("num_classes", &pc::ViTConfig::num_classes)
      .def_readwrite("mlp_hidden", &pc::ViTConfig::mlp_hidden)
      .def_readwrite("head_hidden", &pc::ViTConfig::head_hidden)
      .def_readwrite("dropout_rate", &pc::ViTConfig::dropout_rate)
      .def_readwrite("layer_norm_eps", &pc::ViTConfig::layer_norm_eps)
      .def("validate", &pc::ViTConfig::validate)
      .def_property_readonly("num_patches", &pc::ViTConfig::num_patches)
      .def("parameter_count", [](const pc::ViTConfig& c) { return pc::parameter_count(c); })
      .def("__eq__", [](const pc::ViTConfig& a, const pc::ViTConfig& b) { return a == b; });

  py::class_<Model>(m, "Model")
      .def_static(
          "load", [](const std::filesystem::path& p) { return Model{pc::load_checkpoint(p)}; },
          py::arg("path"))
      .def_property_readonly("class_names", [](const Model& mdl) { return mdl.ckpt.class_names; })
      .def_property_readonly("config", [](const Model& mdl) { return mdl.ckpt.model_config; })
      .def_property_readonly("seed", [](const Model& mdl) { return mdl.ckpt.train_config.seed; })
      .def("predict_proba", &Model::predict_proba, py::arg("image"),
           "Class probabilities for an (height, width, 3) image in [0, 1].");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = pc::run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a patchcraft subcommand; returns (exit_code, stdout, stderr).");
}
