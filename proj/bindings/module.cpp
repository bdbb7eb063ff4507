// Python bindings for the main operations: subspace projection, the
// denoising network, noise synthesis, and the image metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

#include "nbnet/config.hpp"
#include "nbnet/gradcheck_suites.hpp"
#include "nbnet/image_io.hpp"
#include "nbnet/metrics.hpp"
#include "nbnet/net.hpp"
#include "nbnet/noise.hpp"
#include "nbnet/pipeline.hpp"

namespace py = pybind11;
using namespace nbnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> tensor_from_array(const FloatArray& a) {
  Shape shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    shape[static_cast<size_t>(i)] = a.shape(i);
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor<float>::from_data(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor<float> as_image_batch(const FloatArray& a) {
  auto t = tensor_from_array(a);
  if (t.ndim() == 3) {
    Shape s = t.shape();
    s.insert(s.begin(), 1);
    return reshape(t, s);
  }
  check(t.ndim() == 4, "expected a CxHxW or BxCxHxW array");
  return t;
}

struct PyNetwork {
  TrainState<float> state;

  static PyNetwork from_preset(const std::string& name, uint64_t seed) {
    return {TrainState<float>::build(network_preset(name), seed)};
  }
  static PyNetwork from_config(const std::string& json, uint64_t seed) {
    return {TrainState<float>::build(network_config_from_json(json), seed)};
  }
  static PyNetwork load(const std::string& path) {
    return {load_checkpoint<float>(path)};
  }

  py::array_t<float> forward(const FloatArray& input) {
    NoGradGuard ng;
    const bool squeeze = input.ndim() == 3;
    auto out = state.net.forward(as_image_batch(input));
    if (squeeze) out = reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
    return array_from_tensor(out);
  }

  py::array_t<float> denoise(const FloatArray& input) {
    NoGradGuard ng;
    const bool squeeze = input.ndim() == 3;
    auto out = clamp01(state.net.forward(as_image_batch(input)));
    if (squeeze) out = reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
    return array_from_tensor(out);
  }

  py::array_t<float> basis(const FloatArray& input, int layer) {
    NoGradGuard ng;
    typename NbNet<float>::BasisCapture capture;
    capture.level = layer;
    state.net.forward(as_image_batch(input), &capture);
    check(capture.basis.defined(), "basis capture failed; is SSA enabled?");
    return array_from_tensor(capture.basis);
  }

  int64_t param_count() { return state.net.parameter_count(); }
  std::string config_json() { return network_config_to_json(state.net.config); }
  void save(const std::string& path) { save_checkpoint(state, path); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "image denoising by learned subspace projection";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  m.def(
      "project",
      [](const FloatArray& v, const FloatArray& x, float eps) {
        auto V = tensor_from_array(v);
        auto X = tensor_from_array(x);
        NoGradGuard ng;
        return array_from_tensor(batched_gram_solve(V, X, eps));
      },
      py::arg("basis"), py::arg("features"), py::arg("eps") = 0.0f,
      "Orthogonal projection of [B,N,C] features onto span of a [B,N,K] basis");

  m.def(
      "psnr",
      [](const FloatArray& ref, const FloatArray& test, double peak) {
        return psnr(tensor_from_array(ref), tensor_from_array(test), peak);
      },
      py::arg("ref"), py::arg("test"), py::arg("peak") = 1.0);

  m.def(
      "ssim",
      [](const FloatArray& ref, const FloatArray& test, double peak) {
        return ssim(as_image_batch(ref), as_image_batch(test), peak);
      },
      py::arg("ref"), py::arg("test"), py::arg("peak") = 1.0);

  m.def(
      "make_mask",
      [](const std::string& mask_id, int64_t h, int64_t w, uint64_t seed) {
        NoiseSpec spec = NoiseSpec::parse("noniid:" + mask_id, seed);
        return array_from_tensor(
            make_mask<float>(spec.mask_id, h, w, seed, spec.constant_value));
      },
      py::arg("mask_id"), py::arg("height"), py::arg("width"),
      py::arg("seed") = 0);

  m.def(
      "add_noise",
      [](const FloatArray& clean, const std::string& spec_text, uint64_t seed,
         uint64_t stream) {
        auto spec = NoiseSpec::parse(spec_text, seed);
        const bool squeeze = clean.ndim() == 3;
        auto out = apply_noise(as_image_batch(clean), spec, stream);
        if (squeeze) out = reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
        return array_from_tensor(out);
      },
      py::arg("clean"), py::arg("spec"), py::arg("seed") = 0,
      py::arg("stream") = 0,
      "Apply a noise spec like 'awgn:25' or 'noniid:train'");

  m.def("cosine_lr", &cosine_lr, py::arg("step"), py::arg("total"),
        py::arg("lr0"), py::arg("eta_min") = 0.0);

  m.def("presets", [] {
    std::vector<std::string> names;
    for (auto& [n, c] : ablation_presets()) names.push_back(n);
    return names;
  });

  m.def(
      "count_params",
      [](const std::string& preset) {
        return count_params_and_flops(network_preset(preset), 256, 256).params;
      },
      py::arg("preset"));

  m.def(
      "gradcheck",
      [](const std::string& module) {
        std::vector<std::tuple<std::string, double, bool>> out;
        for (auto& c : gradcheck_suite(module))
          out.emplace_back(c.name, c.report.max_rel_error, c.report.passed);
        return out;
      },
      py::arg("module") = "all");

  m.def(
      "read_image",
      [](const std::string& path) {
        auto t = read_image<float>(path);
        return array_from_tensor(reshape(t, {t.dim(1), t.dim(2), t.dim(3)}));
      },
      py::arg("path"));

  m.def(
      "write_image",
      [](const FloatArray& img, const std::string& path, bool clamp) {
        write_image(as_image_batch(img), path, clamp);
      },
      py::arg("image"), py::arg("path"), py::arg("clamp") = false);

  py::class_<PyNetwork>(m, "Network")
      .def_static("from_preset", &PyNetwork::from_preset, py::arg("preset"),
                  py::arg("seed") = 0)
      .def_static("from_config", &PyNetwork::from_config, py::arg("config_json"),
                  py::arg("seed") = 0)
      .def_static("load", &PyNetwork::load, py::arg("path"))
      .def("forward", &PyNetwork::forward, py::arg("input"))
      .def("denoise", &PyNetwork::denoise, py::arg("input"))
      .def("basis", &PyNetwork::basis, py::arg("input"), py::arg("layer") = 0)
      .def("param_count", &PyNetwork::param_count)
      .def("config_json", &PyNetwork::config_json)
      .def("save", &PyNetwork::save, py::arg("path"));
}
