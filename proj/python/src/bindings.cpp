// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "yogo/data.hpp"
#include "yogo/model.hpp"
#include "yogo/trainer.hpp"

namespace py = pybind11;
using namespace yogo;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::size_t>;

PointCloud cloud_from_numpy(const DoubleArray& points, std::optional<py::array_t<int>> labels = std::nullopt,
                            std::optional<int> class_id = std::nullopt) {
  if (points.ndim() != 2 || points.shape(1) < 3) throw std::invalid_argument("points must be an (N, 3+F) array");
  const auto p = points.unchecked<2>();
  PointCloud c;
  c.feature_dim = static_cast<std::size_t>(points.shape(1) - 3);
  for (py::ssize_t i = 0; i < points.shape(0); ++i) {
    c.points.push_back({p(i, 0), p(i, 1), p(i, 2)});
    for (py::ssize_t f = 3; f < points.shape(1); ++f) c.features.push_back(p(i, f));
  }
  if (labels) {
    const auto l = labels->unchecked<1>();
    for (py::ssize_t i = 0; i < l.shape(0); ++i) c.labels.push_back(l(i));
  }
  c.class_id = class_id;
  c.validate();
  return c;
}

py::array_t<double> points_to_numpy(const PointCloud& c) {
  const std::size_t cols = 3 + c.feature_dim;
  py::array_t<double> out({c.size(), cols});
  auto o = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) o(i, a) = c.points[i][a];
    for (std::size_t f = 0; f < c.feature_dim; ++f) o(i, 3 + f) = c.features[i * c.feature_dim + f];
  }
  return out;
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

IndexArray indices_to_numpy(const std::vector<std::size_t>& v, std::size_t cols = 0) {
  IndexArray out = cols ? IndexArray({v.size() / cols, cols}) : IndexArray(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

KeyValues to_key_values(const py::dict& d) {
  KeyValues kv;
  for (auto [k, v] : d) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      std::vector<std::size_t> items = v.cast<std::vector<std::size_t>>();
      value = join_sizes(items);
    } else {
      value = py::str(v).cast<std::string>();
    }
    kv[py::str(k).cast<std::string>()] = value;
  }
  return kv;
}

py::dict to_dict(const KeyValues& kv) {
  py::dict d;
  for (const auto& [k, v] : kv) d[py::str(k)] = v;
  return d;
}

py::dict metrics_to_dict(const EpochMetrics& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["lr"] = m.lr;
  d["loss"] = m.loss;
  d["accuracy"] = m.accuracy;
  d["miou"] = m.miou ? py::cast(*m.miou) : py::none();
  d["seconds"] = m.seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Point-cloud relation inference networks.";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  m.def(
      "farthest_point_sampling",
      [](const DoubleArray& points, std::size_t count, std::uint64_t seed) {
        return indices_to_numpy(farthest_point_sampling(cloud_from_numpy(points), count, seed));
      },
      py::arg("points"), py::arg("count"), py::arg("seed") = 0);
  m.def(
      "random_sampling",
      [](const DoubleArray& points, std::size_t count, std::uint64_t seed) {
        return indices_to_numpy(random_sampling(cloud_from_numpy(points), count, seed));
      },
      py::arg("points"), py::arg("count"), py::arg("seed") = 0);
  m.def(
      "knn_group",
      [](const DoubleArray& points, const std::vector<std::size_t>& centers, std::size_t k) {
        return indices_to_numpy(knn_group(cloud_from_numpy(points), centers, k), k);
      },
      py::arg("points"), py::arg("centers"), py::arg("k"));
  m.def(
      "ball_query_group",
      [](const DoubleArray& points, const std::vector<std::size_t>& centers, std::size_t k, double radius) {
        return indices_to_numpy(ball_query_group(cloud_from_numpy(points), centers, k, radius), k);
      },
      py::arg("points"), py::arg("centers"), py::arg("k"), py::arg("radius"));
  m.def(
      "normalize", [](const DoubleArray& points) { return points_to_numpy(normalize(cloud_from_numpy(points))); },
      py::arg("points"));
  m.def(
      "cloud_iou",
      [](const std::vector<int>& preds, const std::vector<int>& labels, const std::vector<int>& parts) {
        return cloud_iou(preds, labels, parts);
      },
      py::arg("preds"), py::arg("labels"), py::arg("part_set") = std::vector<int>{});

  m.def(
      "generate_synthetic",
      [](std::size_t num_clouds, std::size_t points, double noise, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.num_clouds = num_clouds;
        spec.points_per_cloud = points;
        spec.noise_sigma = noise;
        spec.seed = seed;
        py::list out;
        for (const CloudRecord& r : generate_synthetic(spec)) {
          py::dict d;
          d["id"] = r.source_id;
          d["points"] = points_to_numpy(r.cloud);
          d["labels"] = py::array_t<int>(static_cast<py::ssize_t>(r.cloud.labels.size()), r.cloud.labels.data());
          d["class_id"] = *r.cloud.class_id;
          d["part_set"] = r.part_set;
          out.append(d);
        }
        return out;
      },
      py::arg("num_clouds"), py::arg("points") = 256, py::arg("noise") = 0.02, py::arg("seed") = 0);

  m.def(
      "write_synthetic_dataset",
      [](const std::string& dir, std::size_t train_clouds, std::size_t test_clouds, std::size_t points, double noise,
         std::uint64_t seed) {
        std::vector<CloudRecord> all;
        for (const auto& [split, count, salt] : {std::tuple{"train", train_clouds, 1}, {"test", test_clouds, 2}}) {
          SyntheticSpec spec;
          spec.num_clouds = count;
          spec.points_per_cloud = points;
          spec.noise_sigma = noise;
          spec.seed = mix_seed(seed, salt);
          spec.split = split;
          spec.id_prefix = split;
          for (CloudRecord& r : generate_synthetic(spec)) all.push_back(std::move(r));
        }
        write_dataset(dir, all);
      },
      py::arg("dir"), py::arg("train_clouds") = 200, py::arg("test_clouds") = 50, py::arg("points") = 256,
      py::arg("noise") = 0.02, py::arg("seed") = 0,
      "Same layout and seeds as `yogo gen-data`.");

  py::class_<YogoModel>(m, "Model")
      .def(py::init([](const py::dict& config) { return YogoModel(ModelConfig::from_key_values(to_key_values(config))); }),
           py::arg("config") = py::dict())
      .def_static(
          "load", [](const std::string& path) { return load_checkpoint(path).model; }, py::arg("path"))
      .def(
          "save", [](const YogoModel& self, const std::string& path) { save_checkpoint(path, self); }, py::arg("path"))
      .def_property_readonly("config", [](const YogoModel& self) { return to_dict(self.config().to_key_values()); })
      .def_property_readonly("parameter_count", &YogoModel::parameter_count)
      .def("parameter_names",
           [](const YogoModel& self) {
             std::vector<std::string> names;
             for (const Parameter& p : self.parameters()) names.push_back(p.name);
             return names;
           })
      .def(
          "predict",
          [](const YogoModel& self, const DoubleArray& points, std::size_t votes, std::uint64_t seed,
             std::optional<int> class_id) {
            const PointCloud cloud = normalize(cloud_from_numpy(points, std::nullopt, class_id));
            Tensor probs;
            {
              py::gil_scoped_release release;
              probs = predict_with_voting(self, cloud, votes, seed);
            }
            return tensor_to_numpy(probs);
          },
          py::arg("points"), py::arg("votes") = 1, py::arg("seed") = 0, py::arg("class_id") = py::none(),
          "Voted class or per-point part probabilities for one cloud.")
      .def("__eq__", [](const YogoModel& a, const YogoModel& b) { return a == b; });

  m.def(
      "train",
      [](const py::dict& config, const std::string& data_dir, const std::string& split) {
        const RunConfig run = RunConfig::from_key_values(to_key_values(config));
        const auto records = load_dataset(data_dir, split);
        std::optional<TrainResult> r;
        {
          py::gil_scoped_release release;
          r.emplace(train(run, records));
        }
        py::list metrics;
        for (const EpochMetrics& e : r->metrics) metrics.append(metrics_to_dict(e));
        return py::make_tuple(std::move(r->model), metrics);
      },
      py::arg("config"), py::arg("data_dir"), py::arg("split") = "train",
      "Trains on a dataset directory; returns (model, per-epoch metrics).");

  m.def(
      "evaluate",
      [](const YogoModel& model, const std::string& data_dir, const std::string& split, std::size_t votes,
         std::uint64_t seed) {
        const auto records = load_dataset(data_dir, split);
        return metrics_to_dict(evaluate(model, records, votes, seed));
      },
      py::arg("model"), py::arg("data_dir"), py::arg("split") = "test", py::arg("votes") = 1, py::arg("seed") = 0);
}
