#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wassdiff/config.hpp"
#include "wassdiff/metrics.hpp"
#include "wassdiff/tiled.hpp"
#include "wassdiff/training.hpp"
#include "wassdiff/transport.hpp"

namespace py = pybind11;
using namespace wassdiff;

namespace {

py::array_t<double> field_to_numpy(const GridField& f) {
    py::array_t<double> out({f.height, f.width});
    std::copy(f.values.begin(), f.values.end(), out.mutable_data());
    return out;
}

GridField field_from_numpy(py::array_t<double, py::array::c_style | py::array::forcecast> arr,
                           const std::string& space, double cell_km) {
    if (arr.ndim() != 2) throw DimensionError("expected a 2-D array");
    GridField f(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                space == "physical" ? Space::physical : Space::normalized, cell_km);
    std::copy(arr.data(), arr.data() + f.size(), f.values.begin());
    f.validate();
    return f;
}

EmpiricalBatch batch_from_numpy(
    py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2) throw DimensionError("expected an (m, d) array");
    EmpiricalBatch b(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + b.points.size(), b.points.begin());
    b.validate();
    return b;
}

Histogram histogram_from_numpy(py::array_t<double> edges, py::array_t<double> mass) {
    Histogram h;
    h.edges.assign(edges.data(), edges.data() + edges.size());
    h.mass.assign(mass.data(), mass.data() + mass.size());
    h.validate();
    return h;
}

ConditionTensor condition_from_fields(const std::vector<GridField>& channels,
                                      const std::vector<std::string>& roles) {
    ConditionTensor cond;
    cond.channels = channels;
    for (const auto& r : roles) cond.channel_roles.push_back(channel_role_from_string(r));
    cond.validate();
    return cond;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Wasserstein-regularized diffusion downscaling core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_OSError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_OSError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<GridField>(m, "GridField")
        .def(py::init(&field_from_numpy), py::arg("values"), py::arg("space") = "physical",
             py::arg("cell_km") = 1.0)
        .def_readonly("height", &GridField::height)
        .def_readonly("width", &GridField::width)
        .def_readonly("cell_km", &GridField::cell_km)
        .def_property_readonly(
            "space",
            [](const GridField& f) {
                return f.space == Space::physical ? "physical" : "normalized";
            })
        .def("to_numpy", &field_to_numpy);

    py::class_<ConditionTensor>(m, "ConditionTensor")
        .def(py::init(&condition_from_fields), py::arg("channels"), py::arg("roles"))
        .def_property_readonly("channels",
                               [](const ConditionTensor& c) { return c.channels; })
        .def_property_readonly("roles", [](const ConditionTensor& c) {
            std::vector<std::string> roles;
            for (auto r : c.channel_roles) roles.push_back(to_string(r));
            return roles;
        });

    py::class_<SyntheticPair>(m, "SyntheticPair")
        .def_readonly("target", &SyntheticPair::target)
        .def_readonly("condition", &SyntheticPair::condition);

    m.def("normalize", &normalize, py::arg("field"), py::arg("c_p") = kDefaultCp);
    m.def("denormalize", &denormalize, py::arg("field"), py::arg("c_p") = kDefaultCp);
    m.def("normalize_condition", &normalize_condition, py::arg("condition"),
          py::arg("c_p") = kDefaultCp);
    m.def("coarsen", &coarsen, py::arg("field"), py::arg("factor"));
    m.def("upsample_bilinear", &upsample_bilinear, py::arg("field"), py::arg("target_h"),
          py::arg("target_w"));
    m.def(
        "generate_pair",
        [](int fine_size, int coarsen_factor, double tail_heaviness, double smoothness,
           uint64_t seed, int num_ancillary, double dry_fraction, double median_intensity_mm,
           double cell_km) {
            SyntheticPairConfig cfg;
            cfg.fine_size = fine_size;
            cfg.coarsen_factor = coarsen_factor;
            cfg.tail_heaviness = tail_heaviness;
            cfg.smoothness = smoothness;
            cfg.seed = seed;
            cfg.num_ancillary = num_ancillary;
            cfg.dry_fraction = dry_fraction;
            cfg.median_intensity_mm = median_intensity_mm;
            cfg.cell_km = cell_km;
            return generate_pair(cfg);
        },
        py::arg("fine_size") = 64, py::arg("coarsen_factor") = 4, py::arg("tail_heaviness") = 1.0,
        py::arg("smoothness") = 4.0, py::arg("seed") = 0, py::arg("num_ancillary") = 0,
        py::arg("dry_fraction") = 0.4, py::arg("median_intensity_mm") = 10.0,
        py::arg("cell_km") = 1.0);
    m.def("write_grid", &write_grid, py::arg("field"), py::arg("path"));
    m.def("read_grid", &read_grid, py::arg("path"));

    m.def(
        "wasserstein_1d",
        [](std::vector<double> a, std::vector<double> b) { return wasserstein_1d(a, b); },
        py::arg("a"), py::arg("b"));
    m.def(
        "sample_projections",
        [](int d, int n, uint64_t seed) {
            ProjectionSet proj = sample_projections(d, n, seed);
            py::array_t<double> out({n, d});
            std::copy(proj.vectors.begin(), proj.vectors.end(), out.mutable_data());
            return out;
        },
        py::arg("d"), py::arg("n"), py::arg("seed") = 0);
    m.def(
        "sliced_wasserstein",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
           py::array_t<double, py::array::c_style | py::array::forcecast> b, int num_projections,
           uint64_t seed) {
            EmpiricalBatch ba = batch_from_numpy(a), bb = batch_from_numpy(b);
            ProjectionSet proj = sample_projections(ba.dim, num_projections, seed);
            return sliced_wasserstein(ba, bb, proj);
        },
        py::arg("a"), py::arg("b"), py::arg("num_projections") = kDefaultProjections,
        py::arg("seed") = 0);
    m.def(
        "kl_divergence",
        [](py::array_t<double> edges, py::array_t<double> p, py::array_t<double> q) {
            return kl_divergence(histogram_from_numpy(edges, p), histogram_from_numpy(edges, q));
        },
        py::arg("edges"), py::arg("p"), py::arg("q"));
    m.def(
        "js_divergence",
        [](py::array_t<double> edges, py::array_t<double> p, py::array_t<double> q) {
            return js_divergence(histogram_from_numpy(edges, p), histogram_from_numpy(edges, q));
        },
        py::arg("edges"), py::arg("p"), py::arg("q"));
    m.def("tail_sensitivity_demo", []() {
        TailSensitivityReport r = tail_sensitivity_demo();
        py::dict out;
        out["wasserstein"] = py::make_tuple(r.w_p1, r.w_p2);
        out["kl"] = py::make_tuple(r.kl_p1, r.kl_p2);
        out["js"] = py::make_tuple(r.js_p1, r.js_p2);
        return out;
    });

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def(py::init([](double sigma_min, double sigma_max) {
                 NoiseSchedule s{sigma_min, sigma_max};
                 s.validate();
                 return s;
             }),
             py::arg("sigma_min") = 0.01, py::arg("sigma_max") = 50.0)
        .def_readonly("sigma_min", &NoiseSchedule::sigma_min)
        .def_readonly("sigma_max", &NoiseSchedule::sigma_max);
    m.def("sigma_at", &sigma_at, py::arg("schedule"), py::arg("t"));
    m.def(
        "perturb",
        [](const GridField& x0, const NoiseSchedule& s, double t, uint64_t seed) {
            auto [xt, noise] = perturb(x0, s, t, seed);
            return py::make_tuple(xt, noise);
        },
        py::arg("x0"), py::arg("schedule"), py::arg("t"), py::arg("seed") = 0);
    m.def("score_target", &score_target, py::arg("xt"), py::arg("x0"), py::arg("schedule"),
          py::arg("t"));

    py::class_<SamplerConfig>(m, "SamplerConfig")
        .def(py::init([](int num_steps, int langevin_steps, double snr, uint64_t seed,
                         int ensemble_size) {
                 SamplerConfig c;
                 c.num_steps = num_steps;
                 c.langevin_steps_per_predictor = langevin_steps;
                 c.snr = snr;
                 c.seed = seed;
                 c.ensemble_size = ensemble_size;
                 c.validate();
                 return c;
             }),
             py::arg("num_steps") = 1000, py::arg("langevin_steps_per_predictor") = 1,
             py::arg("snr") = 0.16, py::arg("seed") = 0, py::arg("ensemble_size") = 1)
        .def_readwrite("num_steps", &SamplerConfig::num_steps)
        .def_readwrite("seed", &SamplerConfig::seed)
        .def_readwrite("ensemble_size", &SamplerConfig::ensemble_size);

    py::class_<Architecture>(m, "Architecture")
        .def(py::init([](int hidden_channels, int depth, int time_embed_dim,
                         int condition_channels) {
                 Architecture a;
                 a.hidden_channels = hidden_channels;
                 a.depth = depth;
                 a.time_embed_dim = time_embed_dim;
                 a.condition_channels = condition_channels;
                 a.validate();
                 return a;
             }),
             py::arg("hidden_channels") = 16, py::arg("depth") = 3,
             py::arg("time_embed_dim") = 32, py::arg("condition_channels") = 2)
        .def_readonly("hidden_channels", &Architecture::hidden_channels)
        .def_readonly("depth", &Architecture::depth)
        .def_readonly("condition_channels", &Architecture::condition_channels);

    py::class_<ScoreModel>(m, "ScoreModel")
        .def(py::init<const Architecture&, const NoiseSchedule&, uint64_t>(), py::arg("arch"),
             py::arg("schedule"), py::arg("init_seed") = 0)
        .def_property_readonly("parameter_count", &ScoreModel::parameter_count)
        .def("forward", &ScoreModel::forward, py::arg("x"), py::arg("y"), py::arg("t"))
        .def("parameters",
             [](const ScoreModel& model) {
                 py::array_t<double> out(static_cast<py::ssize_t>(model.parameter_count()));
                 std::copy(model.parameters().begin(), model.parameters().end(),
                           out.mutable_data());
                 return out;
             })
        .def("save_checkpoint",
             [](const ScoreModel& model, const std::string& path, long step, bool ema) {
                 save_checkpoint(model, path, step, ema);
             },
             py::arg("path"), py::arg("step") = 0, py::arg("ema") = false);
    m.def("load_checkpoint", [](const std::string& path) {
        LoadedCheckpoint loaded = load_checkpoint(path);
        return py::make_tuple(std::move(loaded.model), loaded.step, loaded.ema);
    });

    m.def("pc_sample", &pc_sample, py::arg("model"), py::arg("condition"), py::arg("schedule"),
          py::arg("config"), py::arg("hook") = nullptr,
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "sample_ensemble",
        [](const ScoreModel& model, const ConditionTensor& y, const NoiseSchedule& s,
           const SamplerConfig& cfg) {
            py::gil_scoped_release release;
            return sample_ensemble(model, y, s, cfg);
        },
        py::arg("model"), py::arg("condition"), py::arg("schedule"), py::arg("config"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init([](double alpha, int batch_size, long num_iters, double ema_rate,
                         double learning_rate, int swd_projections, uint64_t seed) {
                 TrainConfig c;
                 c.alpha = alpha;
                 c.batch_size = batch_size;
                 c.num_iters = num_iters;
                 c.ema_rate = ema_rate;
                 c.learning_rate = learning_rate;
                 c.swd_projections = swd_projections;
                 c.seed = seed;
                 c.validate();
                 return c;
             }),
             py::arg("alpha") = 0.2, py::arg("batch_size") = 12, py::arg("num_iters") = 100,
             py::arg("ema_rate") = 0.999, py::arg("learning_rate") = 2e-4,
             py::arg("swd_projections") = kDefaultProjections, py::arg("seed") = 0)
        .def_readwrite("alpha", &TrainConfig::alpha)
        .def_readwrite("num_iters", &TrainConfig::num_iters)
        .def_readwrite("seed", &TrainConfig::seed);

    m.def(
        "train",
        [](const std::vector<SyntheticPair>& dataset, const TrainConfig& cfg,
           const Architecture& arch, const NoiseSchedule& schedule, double c_p) {
            TrainResult result = [&]() {
                py::gil_scoped_release release;
                return train(dataset, cfg, arch, schedule, c_p);
            }();
            py::array_t<double> history({static_cast<py::ssize_t>(result.history.size()),
                                         static_cast<py::ssize_t>(5)});
            auto h = history.mutable_unchecked<2>();
            for (size_t i = 0; i < result.history.size(); ++i) {
                h(i, 0) = static_cast<double>(result.history[i].step);
                h(i, 1) = result.history[i].score_loss;
                h(i, 2) = result.history[i].wdr_loss;
                h(i, 3) = result.history[i].total_loss;
                h(i, 4) = result.history[i].grad_norm;
            }
            return py::make_tuple(std::move(result.model), history);
        },
        py::arg("dataset"), py::arg("config"), py::arg("arch"), py::arg("schedule"),
        py::arg("c_p") = kDefaultCp);

    m.def("mae", &mae, py::arg("pred"), py::arg("obs"));
    m.def("bias", &bias, py::arg("pred"), py::arg("obs"));
    m.def("csi", &csi, py::arg("pred"), py::arg("obs"), py::arg("threshold_mm") = 10.0,
          py::arg("pool_km") = 16.0);
    m.def("hrre", &hrre, py::arg("pred"), py::arg("obs"), py::arg("heavy_threshold_mm") = 56.0);
    m.def("mppe", &mppe, py::arg("pred"), py::arg("obs"), py::arg("quantile") = 0.999);
    m.def(
        "crps",
        [](const std::vector<GridField>& members, const GridField& obs) {
            Ensemble ens;
            ens.members = members;
            return crps(ens, obs);
        },
        py::arg("members"), py::arg("obs"));
    m.def(
        "qq_curve",
        [](const std::vector<GridField>& members, const GridField& obs) {
            Ensemble ens;
            ens.members = members;
            QqCurve curve = qq_curve(ens, obs);
            py::dict out;
            out["percentiles"] = curve.percentiles;
            out["obs"] = curve.obs_quantiles;
            out["members"] = curve.member_quantiles;
            out["mean"] = curve.mean_quantiles;
            out["std"] = curve.std_quantiles;
            return out;
        },
        py::arg("members"), py::arg("obs"));

    py::class_<PatchPlan>(m, "PatchPlan")
        .def_readonly("patch", &PatchPlan::patch)
        .def_readonly("stride", &PatchPlan::stride)
        .def_readonly("row_offsets", &PatchPlan::row_offsets)
        .def_readonly("col_offsets", &PatchPlan::col_offsets);
    py::class_<BlendKernel>(m, "BlendKernel").def_readonly("patch", &BlendKernel::patch);
    m.def("plan_patches", &plan_patches, py::arg("height"), py::arg("width"),
          py::arg("patch") = 256, py::arg("stride") = 192);
    m.def("make_blend_kernel", &make_blend_kernel, py::arg("patch"),
          py::arg("std_fraction") = 0.25);
    m.def(
        "merge_step",
        [](const std::vector<GridField>& outputs, const PatchPlan& plan,
           const BlendKernel& kernel) { return merge_step(outputs, plan, kernel); },
        py::arg("patch_outputs"), py::arg("plan"), py::arg("kernel"));
    m.def(
        "tiled_pc_sample",
        [](const ScoreModel& model, const ConditionTensor& y, const NoiseSchedule& s,
           const SamplerConfig& cfg, const PatchPlan& plan, const BlendKernel& kernel) {
            py::gil_scoped_release release;
            return tiled_pc_sample(model, y, s, cfg, plan, kernel);
        },
        py::arg("model"), py::arg("condition"), py::arg("schedule"), py::arg("config"),
        py::arg("plan"), py::arg("kernel"));
}
