#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "meshalign/aligner.hpp"
#include "meshalign/cli.hpp"
#include "meshalign/evalkit.hpp"
#include "meshalign/parallel.hpp"

namespace py = pybind11;
using namespace meshalign;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) array -> planar Image.
Image to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("expected an (H, W[, C]) array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image img(h, w, c);
  const double* src = a.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) img.at(k, y, x) = src[(static_cast<std::size_t>(y) * w + x) * c + k];
    }
  }
  return img;
}

Array from_image(const Image& img) {
  Array a({img.height(), img.width(), img.channels()});
  double* dst = a.mutable_data();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int k = 0; k < img.channels(); ++k) {
        dst[(static_cast<std::size_t>(y) * img.width() + x) * img.channels() + k] = img.at(k, y, x);
      }
    }
  }
  return a;
}

Array motion_array(const FourPtMotion& m) {
  Array a({4, 2});
  for (int i = 0; i < 4; ++i) {
    a.mutable_at(i, 0) = m.d[i].x();
    a.mutable_at(i, 1) = m.d[i].y();
  }
  return a;
}

FourPtMotion to_motion(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != 4 || a.shape(1) != 2) {
    throw std::invalid_argument("expected a (4, 2) corner-motion array");
  }
  FourPtMotion m;
  for (int i = 0; i < 4; ++i) m.d[i] = Vec2(a.at(i, 0), a.at(i, 1));
  return m;
}

Array mesh_vertices(const Mesh& m) {
  Array a({m.rows + 1, m.cols + 1, 2});
  for (int r = 0; r <= m.rows; ++r) {
    for (int c = 0; c <= m.cols; ++c) {
      a.mutable_at(r, c, 0) = m.vertex(r, c).x();
      a.mutable_at(r, c, 1) = m.vertex(r, c).y();
    }
  }
  return a;
}

Mesh to_mesh(const Array& v, int canvas_h, int canvas_w) {
  if (v.ndim() != 3 || v.shape(2) != 2 || v.shape(0) < 2 || v.shape(1) < 2) {
    throw std::invalid_argument("expected a (U+1, V+1, 2) vertex array");
  }
  Mesh m = regular_mesh(static_cast<int>(v.shape(0)) - 1, static_cast<int>(v.shape(1)) - 1,
                        canvas_h, canvas_w);
  for (int r = 0; r <= m.rows; ++r) {
    for (int c = 0; c <= m.cols; ++c) m.vertex(r, c) = Vec2(v.at(r, c, 0), v.at(r, c, 1));
  }
  return m;
}

std::optional<DepthMap> to_depth(const std::optional<Array>& a) {
  if (!a) return std::nullopt;
  DepthMap d;
  d.values = to_image(*a);
  if (d.values.channels() != 1) throw std::invalid_argument("depth must be single channel");
  return d;
}

py::dict breakdown_dict(const LossBreakdown& b) {
  py::dict d;
  d["content_per_layer"] = b.content_per_layer;
  d["content_total"] = b.content_total;
  d["shape"] = b.shape;
  d["objective"] = b.objective_total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_meshalign, m) {
  m.doc() = "Mesh-based image alignment with contextual correlation";

  py::class_<AlignConfig>(m, "AlignConfig")
      .def(py::init<>())
      .def_readwrite("grid_rows", &AlignConfig::grid_rows)
      .def_readwrite("grid_cols", &AlignConfig::grid_cols)
      .def_readwrite("patch", &AlignConfig::patch)
      .def_readwrite("alpha", &AlignConfig::alpha)
      .def_readwrite("depth_levels", &AlignConfig::depth_levels)
      .def_readwrite("lambda_", &AlignConfig::lambda)
      .def_readwrite("mu", &AlignConfig::mu)
      .def_readwrite("omega", &AlignConfig::omega)
      .def_readwrite("refine_iters", &AlignConfig::refine_iters)
      .def_readwrite("step_size", &AlignConfig::step_size)
      .def_readwrite("working_resolution", &AlignConfig::working_resolution)
      .def_readwrite("robust_fit", &AlignConfig::robust_fit)
      .def_readwrite("freeze_depth_levels", &AlignConfig::freeze_depth_levels)
      .def("validate", &AlignConfig::validate);

  py::register_exception<NoOverlapError>(m, "NoOverlapError", PyExc_RuntimeError);

  m.def(
      "align",
      [](const Array& ref, const Array& tgt, std::optional<AlignConfig> cfg,
         const std::optional<Array>& depth) {
        const Image i_r = to_image(ref);
        const Image i_t = to_image(tgt);
        const auto d = to_depth(depth);
        AlignmentResult r;
        {
          py::gil_scoped_release release;
          r = align(i_r, i_t, cfg.value_or(AlignConfig{}), d);
        }
        py::dict out;
        out["global_h"] = Eigen::Matrix3d(r.global_h.matrix());
        out["mesh"] = mesh_vertices(r.mesh);
        out["mesh_valid"] = r.mesh_valid;
        py::list history;
        for (const auto& b : r.history) history.append(breakdown_dict(b));
        out["history"] = history;
        out["global_trace"] = r.global_trace;
        out["mesh_trace"] = r.mesh_trace;
        return out;
      },
      py::arg("ref"), py::arg("tgt"), py::arg("config") = py::none(),
      py::arg("depth") = py::none(),
      "Aligns tgt onto ref's canvas; returns global_h, mesh vertices and loss history.");

  m.def(
      "make_texture",
      [](int h, int w, std::uint64_t seed, int channels) {
        return from_image(make_texture(h, w, seed, channels));
      },
      py::arg("height"), py::arg("width"), py::arg("seed"), py::arg("channels") = 3);

  m.def(
      "synth_pair",
      [](const Array& src, double rho, int patch, std::uint64_t seed) {
        const SynthPair p = synth_pair(to_image(src), rho, patch, seed);
        return py::make_tuple(from_image(p.reference), from_image(p.target),
                              motion_array(p.gt_motion));
      },
      py::arg("src"), py::arg("rho"), py::arg("patch"), py::arg("seed"),
      "Returns (reference, target, gt_motion) with gt_motion shaped (4, 2).");

  m.def(
      "from_4pt",
      [](const Array& motion, double width, double height) {
        return Eigen::Matrix3d(from_4pt(to_motion(motion), Rect{0, 0, width, height}).matrix());
      },
      py::arg("motion"), py::arg("width"), py::arg("height"));
  m.def(
      "to_4pt",
      [](const Eigen::Matrix3d& h, double width, double height) {
        return motion_array(to_4pt(Homography(h), Rect{0, 0, width, height}));
      },
      py::arg("h"), py::arg("width"), py::arg("height"));
  m.def(
      "rmse_4pt",
      [](const Array& pred, const Array& gt) { return rmse_4pt(to_motion(pred), to_motion(gt)); },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "warp_global",
      [](const Array& img, const Eigen::Matrix3d& h, int out_h, int out_w) {
        return from_image(warp_global(to_image(img), Homography(h), out_h, out_w));
      },
      py::arg("img"), py::arg("h"), py::arg("out_h"), py::arg("out_w"));
  m.def(
      "warp_mesh",
      [](const Array& img, const Array& vertices, int canvas_h, int canvas_w) {
        return from_image(warp_mesh(to_image(img), to_mesh(vertices, canvas_h, canvas_w)));
      },
      py::arg("img"), py::arg("vertices"), py::arg("canvas_h"), py::arg("canvas_w"));
  m.def(
      "regular_mesh",
      [](int rows, int cols, int canvas_h, int canvas_w) {
        return mesh_vertices(regular_mesh(rows, cols, canvas_h, canvas_w));
      },
      py::arg("rows"), py::arg("cols"), py::arg("canvas_h"), py::arg("canvas_w"));

  m.def(
      "content_loss",
      [](const Array& ref, const Array& tgt, const Eigen::Matrix3d& h) {
        return content_loss_layer(to_image(ref), to_image(tgt), Homography(h));
      },
      py::arg("ref"), py::arg("tgt"), py::arg("h"));
  m.def(
      "psnr_overlap",
      [](const Array& ref, const Array& tgt, const Eigen::Matrix3d& h) {
        return psnr_overlap(to_image(ref), to_image(tgt), Homography(h));
      },
      py::arg("ref"), py::arg("tgt"), py::arg("h"));
  m.def(
      "ssim_overlap",
      [](const Array& ref, const Array& tgt, const Eigen::Matrix3d& h) {
        return ssim_overlap(to_image(ref), to_image(tgt), Homography(h));
      },
      py::arg("ref"), py::arg("tgt"), py::arg("h"));

  m.def(
      "load_image", [](const std::string& path) { return from_image(load_image(path)); },
      py::arg("path"));
  m.def(
      "save_image",
      [](const Array& img, const std::string& path) { save_image(to_image(img), path); },
      py::arg("img"), py::arg("path"));

  m.def("set_thread_count", &set_thread_count, py::arg("threads"));
  m.def("thread_count", &thread_count);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a meshalign subcommand; returns (exit_code, stdout, stderr).");
}
