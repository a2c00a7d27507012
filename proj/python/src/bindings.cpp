#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dvislam/camera.hpp"
#include "dvislam/ckf.hpp"
#include "dvislam/dvi.hpp"
#include "dvislam/errors.hpp"
#include "dvislam/experiment.hpp"
#include "dvislam/gaussian.hpp"
#include "dvislam/liegroup.hpp"
#include "dvislam/msckf.hpp"
#include "dvislam/network.hpp"
#include "dvislam/sim.hpp"

namespace py = pybind11;
using namespace dvislam;

namespace {

BlockIndex block_from(const std::vector<Eigen::Index>& idx) {
  BlockIndex b;
  for (auto i : idx) b.append(i, 1);
  return b;
}

py::dict report_dict(const RunResult& r) {
  py::list robots;
  for (const auto& m : r.report.robots) {
    py::dict d;
    d["trajectory_rmse"] = m.trajectory_rmse;
    d["object_error"] = m.object_error ? py::cast(*m.object_error) : py::none();
    d["disagreement"] = m.disagreement ? py::cast(*m.disagreement) : py::none();
    d["objects"] = m.objects;
    robots.append(d);
  }
  py::dict out;
  out["failed"] = r.failed;
  out["error"] = r.error;
  out["robots"] = robots;
  out["team_average_rmse"] = r.report.team_average_rmse();
  auto opt = [](std::optional<double> v) { return v ? py::cast(*v) : py::none(); };
  out["team_average_object_error"] = opt(r.report.team_average(&RobotMetrics::object_error));
  out["team_average_disagreement"] = opt(r.report.team_average(&RobotMetrics::disagreement));
  out["pooled_trajectory_rmse"] = r.report.pooled_trajectory_rmse;
  out["jitter_events"] = r.report.jitter_events;
  out["communication_bytes"] = r.report.communication_bytes;
  std::ostringstream csv;
  write_report_csv(csv, r.report);
  out["report_csv"] = csv.str();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "dvislam C++ core";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DegenerateRotation>(m, "DegenerateRotation", PyExc_ValueError);
  py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", PyExc_ArithmeticError);
  py::register_exception<InnovationNotSpd>(m, "InnovationNotSpd", PyExc_ArithmeticError);
  py::register_exception<LowParallax>(m, "LowParallax", PyExc_ValueError);
  py::register_exception<ScenarioInfeasible>(m, "ScenarioInfeasible", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // liegroup
  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init<const Eigen::Matrix3d&, const Eigen::Vector3d&>(), py::arg("rotation"), py::arg("translation"))
      .def_static("from_matrix", &Pose::from_matrix)
      .def_property_readonly("rotation", &Pose::rotation)
      .def_property_readonly("translation", &Pose::translation)
      .def("matrix", &Pose::matrix)
      .def("inverse", &Pose::inverse)
      .def("__mul__", [](const Pose& a, const Pose& b) { return a * b; })
      .def("transform", [](const Pose& a, const Eigen::Vector3d& p) -> Eigen::Vector3d { return a * p; })
      .def("__repr__", [](const Pose& p) {
        std::ostringstream os;
        os << "Pose(t=[" << p.translation().transpose() << "])";
        return os.str();
      });
  m.def("so3_exp", &so3_exp);
  m.def("so3_log", &so3_log);
  m.def("se3_exp", [](const Vector6d& xi) { return se3_exp(xi); }, "twist ordered (rho, phi)");
  m.def("se3_log", &se3_log);
  m.def("se3_adjoint", &se3_adjoint);

  // gaussian
  m.def(
      "reconstruct_joint",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const std::vector<Eigen::Index>& y,
         const Eigen::VectorXd& new_mean, const Eigen::MatrixXd& new_cov) {
        const Gaussian g = reconstruct_joint(Gaussian(mean, cov), block_from(y), Gaussian(new_mean, new_cov));
        return py::make_tuple(g.mean, g.cov);
      },
      py::arg("mean"), py::arg("cov"), py::arg("y"), py::arg("new_mean"), py::arg("new_cov"),
      "Replace the marginal over indices y, keeping the conditional of the rest.");
  m.def(
      "info_average",
      [](const std::vector<double>& weights, const std::vector<Eigen::VectorXd>& info_vecs,
         const std::vector<Eigen::MatrixXd>& info_mats) {
        if (weights.size() != info_vecs.size() || weights.size() != info_mats.size()) {
          throw InvalidArgument("info_average: list lengths differ");
        }
        std::vector<WeightedInfo> terms;
        for (std::size_t k = 0; k < weights.size(); ++k) terms.push_back({weights[k], InfoGaussian(info_vecs[k], info_mats[k])});
        const InfoGaussian g = info_average(terms);
        return py::make_tuple(g.info_vec, g.info_mat);
      },
      py::arg("weights"), py::arg("info_vecs"), py::arg("info_mats"));

  // ckf
  m.def(
      "correlated_gain",
      [](const Eigen::MatrixXd& P, const Eigen::MatrixXd& H, const Eigen::MatrixXd& V, const Eigen::MatrixXd& S) {
        const CorrelatedGain g = correlated_gain(P, H, V, S);
        return py::make_tuple(g.gain, g.posterior_cov, g.innovation_cov);
      },
      py::arg("P"), py::arg("H"), py::arg("V"), py::arg("S"));
  m.def(
      "ckf_predict",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& u, const Eigen::MatrixXd& F,
         const Eigen::MatrixXd& G, const Eigen::MatrixXd& W) {
        const Gaussian g = ckf_predict(Gaussian(mean, cov), u, F, G, W);
        return py::make_tuple(g.mean, g.cov);
      },
      py::arg("mean"), py::arg("cov"), py::arg("u"), py::arg("F"), py::arg("G"), py::arg("W"));
  m.def(
      "ckf_update",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& z, const Eigen::MatrixXd& H,
         const Eigen::MatrixXd& V, std::optional<Eigen::MatrixXd> S) {
        const NoiseCorrelation corr = S ? NoiseCorrelation{*S} : NoiseCorrelation::zero(mean.size(), z.size());
        const Gaussian g = ckf_update(Gaussian(mean, cov), z, H, V, corr);
        return py::make_tuple(g.mean, g.cov);
      },
      py::arg("mean"), py::arg("cov"), py::arg("z"), py::arg("H"), py::arg("V"), py::arg("S") = py::none());

  // network
  m.def(
      "metropolis_weights", [](std::vector<Edge> edges, std::size_t n) { return metropolis_weights(std::move(edges), n).weights(); },
      py::arg("edges"), py::arg("n"));

  // dvi
  py::class_<LinearModel>(m, "LinearModel")
      .def(py::init([](Eigen::MatrixXd F, Eigen::MatrixXd G, Eigen::MatrixXd W, Eigen::MatrixXd H, Eigen::MatrixXd V,
                       Eigen::VectorXd prior_mean, Eigen::MatrixXd prior_cov) {
             LinearModel lm{std::move(F), std::move(G), std::move(W), std::move(H), std::move(V),
                            Gaussian(std::move(prior_mean), std::move(prior_cov))};
             lm.validate();
             return lm;
           }),
           py::arg("F"), py::arg("G"), py::arg("W"), py::arg("H"), py::arg("V"), py::arg("prior_mean"),
           py::arg("prior_cov"));
  py::class_<LiftedModel>(m, "LiftedModel")
      .def(py::init<LinearModel, std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>>(), py::arg("model"),
           py::arg("inputs"), py::arg("observations"))
      .def_property_readonly("lifted_dim", &LiftedModel::lifted_dim)
      .def("information", [](const LiftedModel& l) { return py::make_tuple(l.information().info_vec, l.information().info_mat); });
  m.def("batch_solution", [](const LiftedModel& l) {
    const Gaussian g = batch_solution(l);
    return py::make_tuple(g.mean, g.cov);
  });
  m.def(
      "dvi_round",
      [](const std::vector<Eigen::VectorXd>& means, const std::vector<Eigen::MatrixXd>& covs,
         const std::vector<std::vector<Eigen::Index>>& common, const std::vector<LiftedModel>& lifted,
         std::vector<Edge> edges, double alpha, std::size_t k) {
        const std::size_t n = means.size();
        if (covs.size() != n || common.size() != n) throw InvalidArgument("dvi_round: list lengths differ");
        std::vector<DviNode> nodes;
        for (std::size_t i = 0; i < n; ++i) {
          nodes.push_back({Gaussian(means[i], covs[i]), block_from(common[i]), StepSchedule{{}, alpha}});
        }
        const auto next = dvi_round(nodes, lifted, metropolis_weights(std::move(edges), n), k);
        py::list out;
        for (const auto& node : next) out.append(py::make_tuple(node.belief.mean, node.belief.cov));
        return out;
      },
      py::arg("means"), py::arg("covs"), py::arg("common"), py::arg("lifted"), py::arg("edges"), py::arg("alpha"),
      py::arg("k") = 0, "One synchronous round for every node; returns [(mean, cov), ...].");

  // camera / msckf
  py::class_<CameraModel>(m, "CameraModel")
      .def(py::init<>())
      .def_readwrite("fx", &CameraModel::fx)
      .def_readwrite("fy", &CameraModel::fy)
      .def_readwrite("cx", &CameraModel::cx)
      .def_readwrite("cy", &CameraModel::cy)
      .def_readwrite("baseline", &CameraModel::baseline)
      .def_readwrite("width", &CameraModel::width)
      .def_readwrite("height", &CameraModel::height);
  m.def("project", [](const CameraModel& cam, const Eigen::Vector3d& p_cam) -> Eigen::Vector3d { return project(cam, p_cam); });
  m.def("linearize_observation", [](const CameraModel& cam, const Pose& T, const Eigen::Vector3d& p) {
    const auto lin = linearize_observation(cam, T, p);
    return py::make_tuple(Eigen::Vector3d(lin.predicted), Eigen::MatrixXd(lin.wrt_pose), Eigen::Matrix3d(lin.wrt_point));
  });
  m.def(
      "triangulate",
      [](const std::vector<Pose>& poses, const std::vector<Eigen::Vector3d>& pixels, const CameraModel& cam) {
        std::vector<StereoPixel> px(pixels.begin(), pixels.end());
        const Triangulation t = triangulate(poses, px, cam);
        return py::make_tuple(Eigen::Vector3d(t.point), t.rms);
      },
      py::arg("poses"), py::arg("pixels"), py::arg("camera") = CameraModel{});

  // sim / experiment
  m.def(
      "generate_scenario",
      [](std::size_t n_robots, std::size_t horizon, std::size_t n_objects, std::uint64_t seed) {
        SimConfig c;
        c.n_robots = n_robots;
        c.horizon = horizon;
        c.n_objects = n_objects;
        c.seed = seed;
        const Scenario s = generate_scenario(c);
        py::list trajectories;
        for (const auto& traj : s.ground_truth) {
          Eigen::MatrixXd xyz(static_cast<Eigen::Index>(traj.size()), 3);
          for (std::size_t t = 0; t < traj.size(); ++t) xyz.row(static_cast<Eigen::Index>(t)) = traj[t].translation().transpose();
          trajectories.append(xyz);
        }
        py::dict objects;
        for (const auto& [id, p] : s.objects()) objects[py::int_(id)] = Eigen::Vector3d(p);
        py::list obs_counts;
        for (const auto& steps : s.steps) {
          std::size_t k = 0;
          for (const auto& st : steps) k += st.objects.size();
          obs_counts.append(k);
        }
        py::dict out;
        out["trajectories"] = trajectories;
        out["objects"] = objects;
        out["object_observations"] = obs_counts;
        return out;
      },
      py::arg("n_robots") = 3, py::arg("horizon") = 300, py::arg("n_objects") = 210, py::arg("seed") = 1);
  m.def(
      "run_config",
      [](const std::string& config_text, const std::string& out_dir) {
        const ExperimentConfig cfg = parse_experiment_config(config_text, "<config>");
        std::ostringstream log;
        py::gil_scoped_release release;
        return run_experiment(cfg, out_dir, log);
      },
      py::arg("config_text"), py::arg("out_dir"), "Run an experiment config (JSON text); returns the CLI exit status.");
  m.def(
      "run_single",
      [](const std::string& config_text, const std::string& variant, double loss_rate, std::uint64_t seed) {
        const ExperimentConfig cfg = parse_experiment_config(config_text, "<config>");
        const auto v = parse_variant(variant);
        if (!v) throw InvalidArgument("variant must be separate or consensus");
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_scenario(scenario_for_seed(cfg, seed), cfg, *v, loss_rate, seed, cfg.threads);
        }
        return report_dict(r);
      },
      py::arg("config_text"), py::arg("variant"), py::arg("loss_rate") = 0.0, py::arg("seed") = 1,
      "Run one (variant, loss rate, seed) and return its metrics.");
}
