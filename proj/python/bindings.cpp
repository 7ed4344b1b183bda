#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "markerforge/benchmark.hpp"
#include "markerforge/dataset.hpp"
#include "markerforge/losses.hpp"
#include "markerforge/matcher.hpp"
#include "markerforge/metrics.hpp"
#include "markerforge/serialize.hpp"
#include "markerforge/warp.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace markerforge;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

imaging::Image image_from_array(const FloatArray& arr) {
    if (arr.ndim() != 2 && arr.ndim() != 3) {
        throw py::value_error("image must be (H, W) or (H, W, C)");
    }
    const int h = static_cast<int>(arr.shape(0));
    const int w = static_cast<int>(arr.shape(1));
    const int c = arr.ndim() == 3 ? static_cast<int>(arr.shape(2)) : 1;
    if (c != 1 && c != 3) throw py::value_error("channels must be 1 or 3");
    auto img = imaging::Image::create(w, h, c);
    std::copy(arr.data(), arr.data() + img.data.size(), img.data.begin());
    return img;
}

py::array image_to_array(const imaging::Image& img) {
    if (img.channels == 1) {
        FloatArray arr({img.height, img.width});
        std::copy(img.data.begin(), img.data.end(), arr.mutable_data());
        return arr;
    }
    FloatArray arr({img.height, img.width, img.channels});
    std::copy(img.data.begin(), img.data.end(), arr.mutable_data());
    return arr;
}

imaging::FlowField flow_from_arrays(const DoubleArray& flow,
                                    const BoolArray& valid) {
    if (flow.ndim() != 3 || flow.shape(2) != 2) {
        throw py::value_error("flow must be (H, W, 2)");
    }
    if (valid.ndim() != 2 || valid.shape(0) != flow.shape(0) ||
        valid.shape(1) != flow.shape(1)) {
        throw py::value_error("valid mask must be (H, W) matching the flow");
    }
    const int h = static_cast<int>(flow.shape(0));
    const int w = static_cast<int>(flow.shape(1));
    auto field = imaging::FlowField::create(w, h);
    auto f = flow.unchecked<3>();
    auto v = valid.unchecked<2>();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (v(y, x)) {
                field.set(x, y, {f(y, x, 0), f(y, x, 1)});
            }
        }
    }
    return field;
}

py::tuple flow_to_arrays(const imaging::FlowField& field) {
    DoubleArray flow({field.height, field.width, 2});
    BoolArray valid({field.height, field.width});
    auto f = flow.mutable_unchecked<3>();
    auto v = valid.mutable_unchecked<2>();
    for (int y = 0; y < field.height; ++y) {
        for (int x = 0; x < field.width; ++x) {
            const bool ok = field.is_valid(x, y);
            v(y, x) = ok;
            const auto p = ok ? field.at(x, y) : geometry::Point2{0.0, 0.0};
            f(y, x, 0) = p.x;
            f(y, x, 1) = p.y;
        }
    }
    return py::make_tuple(flow, valid);
}

imaging::ValidRegion region_from_optional(const std::optional<BoolArray>& mask,
                                          int width, int height) {
    auto region = imaging::ValidRegion::create(width, height);
    if (!mask) {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) region.set(x, y);
        return region;
    }
    if (mask->ndim() != 2 || mask->shape(0) != height ||
        mask->shape(1) != width) {
        throw py::value_error("mask must be (H, W) matching the images");
    }
    auto m = mask->unchecked<2>();
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (m(y, x)) region.set(x, y);
    return region;
}

geometry::FundamentalMatrix fundamental_from_array(const DoubleArray& arr) {
    if (arr.ndim() != 2 || arr.shape(0) != 3 || arr.shape(1) != 3) {
        throw py::value_error("fundamental matrix must be (3, 3)");
    }
    Eigen::Matrix3d m;
    auto a = arr.unchecked<2>();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = a(i, j);
    return geometry::FundamentalMatrix::from_matrix(m);
}

json json_from_pyobj(const py::object& obj) {
    const auto dumps = py::module_::import("json").attr("dumps");
    return json::parse(dumps(obj).cast<std::string>());
}

py::object pyobj_from_json(const json& j) {
    const auto loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

py::dict report_to_dict(const losses::LossReport& r) {
    py::dict d;
    d["total"] = r.total;
    d["count"] = r.count;
    d["mean"] = r.mean();
    d["degenerate_count"] = r.degenerate_count;
    return d;
}

py::dict outcome_to_dict(const matcher::MatchOutcome& outcome) {
    py::dict d;
    d["failed"] = !outcome.ok();
    if (outcome.ok()) {
        const auto pair = flow_to_arrays(*outcome.flow);
        d["flow"] = pair[0];
        d["valid"] = pair[1];
    } else {
        d["reason"] = outcome.failure_reason;
    }
    return d;
}

void register_errors(py::module_&) {
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(PyExc_RuntimeError, e.what());
        }
    });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Synthetic marker correspondence toolkit";
    register_errors(m);

    m.def(
        "read_png",
        [](const std::string& path) { return image_to_array(imaging::read_png(path)); },
        py::arg("path"));
    m.def(
        "write_png",
        [](const std::string& path, const FloatArray& img) {
            imaging::write_png(path, image_from_array(img));
        },
        py::arg("path"), py::arg("image"));
    m.def(
        "read_flo",
        [](const std::string& path) { return flow_to_arrays(imaging::read_flo(path)); },
        py::arg("path"));
    m.def(
        "write_flo",
        [](const std::string& path, const DoubleArray& flow,
           const BoolArray& valid) {
            imaging::write_flo(path, flow_from_arrays(flow, valid));
        },
        py::arg("path"), py::arg("flow"), py::arg("valid"));

    m.def(
        "generate",
        [](const std::vector<std::string>& markers,
           const std::vector<std::string>& backgrounds,
           const std::string& out_dir, int64_t count, uint64_t seed,
           int workers, std::pair<int, int> canvas, const std::string& name,
           int max_redraws) {
            flyingmarkers::GeneratorConfig config;
            config.count = count;
            config.output_dir = out_dir;
            config.name = name;
            config.workers = workers;
            config.max_redraws = max_redraws;
            config.sampler.master_seed = seed;
            config.sampler.canvas = {canvas.first, canvas.second};
            py::gil_scoped_release release;
            flyingmarkers::generate_dataset(config, markers, backgrounds);
            return out_dir + "/manifest.json";
        },
        py::arg("markers"), py::arg("backgrounds"), py::arg("out_dir"),
        py::arg("count"), py::arg("seed") = 0, py::arg("workers") = 1,
        py::arg("canvas") = std::make_pair(640, 480),
        py::arg("name") = "flyingmarkers", py::arg("max_redraws") = 16);

    m.def(
        "load_transform",
        [](const py::object& obj) {
            // Round-trips through the C++ representation so invalid
            // transforms are rejected here, not at first use.
            const auto t =
                py::isinstance<py::str>(obj)
                    ? geometry::load_transform(obj.cast<std::string>())
                    : geometry::transform_from_json(json_from_pyobj(obj));
            return pyobj_from_json(geometry::transform_to_json(t));
        },
        py::arg("transform"),
        "Load a transform (JSON path or dict) into its canonical dict form.");

    m.def(
        "l_syn",
        [](const DoubleArray& flow, const BoolArray& valid,
           const py::object& transform) {
            const auto field = flow_from_arrays(flow, valid);
            const auto t = geometry::transform_from_json(json_from_pyobj(transform));
            return report_to_dict(losses::l_syn(field, t));
        },
        py::arg("flow"), py::arg("valid"), py::arg("transform"));

    m.def(
        "l_sed",
        [](const DoubleArray& flow, const BoolArray& valid,
           const DoubleArray& fundamental, std::optional<double> clip) {
            const auto field = flow_from_arrays(flow, valid);
            const auto f = fundamental_from_array(fundamental);
            return report_to_dict(
                losses::l_sed(field, f, false, clip.value_or(losses::kNoClip)));
        },
        py::arg("flow"), py::arg("valid"), py::arg("fundamental"),
        py::arg("clip") = py::none());

    m.def(
        "grad_l_syn",
        [](const DoubleArray& flow, const BoolArray& valid,
           const py::object& transform) {
            const auto field = flow_from_arrays(flow, valid);
            const auto t = geometry::transform_from_json(json_from_pyobj(transform));
            const auto grad = losses::grad_l_syn(field, t);
            DoubleArray out({grad.height, grad.width, 2});
            auto o = out.mutable_unchecked<3>();
            for (int y = 0; y < grad.height; ++y) {
                for (int x = 0; x < grad.width; ++x) {
                    const auto g = grad.at(x, y);
                    o(y, x, 0) = g.x;
                    o(y, x, 1) = g.y;
                }
            }
            return out;
        },
        py::arg("flow"), py::arg("valid"), py::arg("transform"));

    m.def(
        "sed",
        [](std::pair<double, double> x, std::pair<double, double> xp,
           const DoubleArray& fundamental) {
            return geometry::sed({x.first, x.second}, {xp.first, xp.second},
                                 fundamental_from_array(fundamental));
        },
        py::arg("x"), py::arg("xp"), py::arg("fundamental"));

    m.def(
        "dense_match",
        [](const FloatArray& marker, const FloatArray& reference, int levels,
           int search_radius, int iterations, int patch_radius,
           double min_peak) {
            const auto m_img = image_from_array(marker);
            const auto r_img = image_from_array(reference);
            matcher::DenseMatchParams params;
            params.levels = levels;
            params.search_radius = search_radius;
            params.iterations = iterations;
            params.patch_radius = patch_radius;
            params.min_peak = min_peak;
            imaging::FlowField flow = [&] {
                py::gil_scoped_release release;
                return matcher::dense_match(m_img, r_img, params);
            }();
            return flow_to_arrays(flow);
        },
        py::arg("marker"), py::arg("reference"), py::arg("levels") = 4,
        py::arg("search_radius") = 4, py::arg("iterations") = 1,
        py::arg("patch_radius") = 3, py::arg("min_peak") = 0.2);

    m.def(
        "homography_match",
        [](const FloatArray& marker, const FloatArray& reference,
           int iterations, double threshold, uint64_t seed, int max_corners) {
            const auto m_img = image_from_array(marker);
            const auto r_img = image_from_array(reference);
            matcher::MatchOutcome outcome = [&] {
                py::gil_scoped_release release;
                const auto corners_m = matcher::detect_corners(m_img, max_corners);
                const auto corners_r = matcher::detect_corners(r_img, max_corners);
                const auto matches = matcher::match_descriptors(
                    m_img, corners_m, r_img, corners_r);
                matcher::RansacParams params;
                params.iterations = iterations;
                params.inlier_threshold_px = threshold;
                params.seed = seed;
                return matcher::ransac_homography(
                    matches, params, {m_img.width, m_img.height},
                    {r_img.width, r_img.height});
            }();
            return outcome_to_dict(outcome);
        },
        py::arg("marker"), py::arg("reference"), py::arg("iterations") = 2000,
        py::arg("threshold") = 3.0, py::arg("seed") = 0,
        py::arg("max_corners") = 500);

    m.def(
        "ssim",
        [](const FloatArray& a, const FloatArray& b,
           const std::optional<BoolArray>& mask) {
            const auto img_a = image_from_array(a);
            const auto img_b = image_from_array(b);
            const auto region =
                region_from_optional(mask, img_a.width, img_a.height);
            return imaging::ssim_value(img_a, img_b, region);
        },
        py::arg("a"), py::arg("b"), py::arg("mask") = py::none());

    m.def(
        "psnr",
        [](const FloatArray& a, const FloatArray& b,
           const std::optional<BoolArray>& mask) {
            const auto img_a = image_from_array(a);
            const auto img_b = image_from_array(b);
            const auto region =
                region_from_optional(mask, img_a.width, img_a.height);
            return imaging::psnr_value(img_a, img_b, region);
        },
        py::arg("a"), py::arg("b"), py::arg("mask") = py::none());

    m.def(
        "epe",
        [](const DoubleArray& pred, const BoolArray& pred_valid,
           const DoubleArray& gt, const BoolArray& gt_valid) {
            const auto result =
                benchmark::epe(flow_from_arrays(pred, pred_valid),
                               flow_from_arrays(gt, gt_valid));
            py::dict d;
            d["mean"] = result.mean;
            d["count"] = result.count;
            return d;
        },
        py::arg("pred"), py::arg("pred_valid"), py::arg("gt"),
        py::arg("gt_valid"));

    m.def(
        "pck",
        [](const DoubleArray& pred, const BoolArray& pred_valid,
           const DoubleArray& gt, const BoolArray& gt_valid, double delta) {
            return benchmark::pck(flow_from_arrays(pred, pred_valid),
                                  flow_from_arrays(gt, gt_valid), delta);
        },
        py::arg("pred"), py::arg("pred_valid"), py::arg("gt"),
        py::arg("gt_valid"), py::arg("delta"));

    m.def(
        "load_manifest",
        [](const std::string& path) {
            const auto manifest = flyingmarkers::load_manifest(path);
            return pyobj_from_json(flyingmarkers::manifest_to_json(manifest));
        },
        py::arg("path"));
}
