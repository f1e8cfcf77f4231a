#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "maldistill/cli/cli.hpp"
#include "maldistill/distill/losses.hpp"
#include "maldistill/eval/dataset.hpp"
#include "maldistill/eval/metrics.hpp"
#include "maldistill/eval/synthetic.hpp"
#include "maldistill/featurize/api.hpp"
#include "maldistill/featurize/ember.hpp"
#include "maldistill/nn/arch.hpp"
#include "maldistill/nn/model.hpp"
#include "maldistill/orchestrator/simulation.hpp"

namespace py = pybind11;
using namespace maldistill;

namespace {

distill::DistillConfig make_config(double alpha, double tau, const std::string& loss) {
  distill::DistillConfig c;
  c.alpha = alpha;
  c.tau = tau;
  c.loss = distill::parse_loss_kind(loss);
  c.validate();
  return c;
}

std::vector<std::string> tokens_of(const std::string& api, const py::dict& args) {
  featurize::ApiCallRecord rec{api, {}};
  for (const auto& [k, v] : args) {
    featurize::ArgValue value;
    if (py::isinstance<py::bool_>(v)) {
      value = std::int64_t{v.cast<bool>()};
    } else if (py::isinstance<py::int_>(v)) {
      value = v.cast<std::int64_t>();
    } else {
      value = v.cast<std::string>();
    }
    rec.args.push_back({k.cast<std::string>(), value});
  }
  return featurize::api_arg_tokens(rec);
}

py::array_t<float> predict(const std::string& checkpoint, const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& views) {
  auto ckpt = nn::load_checkpoint(checkpoint);
  const auto dims = ckpt.network->input_dims();
  if (views.size() != dims.size()) {
    throw std::invalid_argument("checkpoint expects " + std::to_string(dims.size()) + " views");
  }
  std::vector<core::TensorF> inputs;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& a = views[v];
    if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(1)) != dims[v]) {
      throw std::invalid_argument("view " + std::to_string(v) + " must be [N, " + std::to_string(dims[v]) + "]");
    }
    const auto n = static_cast<std::size_t>(a.shape(0));
    inputs.emplace_back(core::Shape{n, dims[v]}, std::vector<float>(a.data(), a.data() + n * dims[v]));
  }
  const auto logits = ckpt.network->forward(std::span<const core::TensorF>(inputs), core::Mode::eval).logits;
  py::array_t<float> out({logits.dim(0), logits.dim(1)});
  std::copy(logits.values().begin(), logits.values().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the maldistill toolkit";

  m.def("murmur3_32", [](const py::bytes& data, std::uint32_t seed) {
          return featurize::murmur3_32(std::string(data), seed);
        }, py::arg("data"), py::arg("seed") = 0);
  m.def("hash_vectorize", [](const std::vector<std::string>& tokens, std::size_t dim) {
          return featurize::hash_vectorize(tokens, dim);
        }, py::arg("tokens"), py::arg("dim") = featurize::kApiHashDim);
  m.def("api_arg_tokens", &tokens_of, py::arg("api"), py::arg("args"));
  m.def("ember_lite", [](const py::bytes& data) {
          const std::string s(data);
          const auto row = featurize::ember_lite(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
          py::array_t<float> out(row.size());
          std::copy(row.begin(), row.end(), out.mutable_data());
          return out;
        }, py::arg("data"));

  m.def("softmax_tau", [](const std::vector<double>& z, double tau) { return core::softmax_tau<double>(z, tau); },
        py::arg("z"), py::arg("tau") = 1.0);
  using Vec = std::vector<double>;
  m.def("ce_loss", [](const Vec& p, const Vec& y) { return distill::ce_loss(p, y); }, py::arg("p"), py::arg("y"));
  m.def("kd_kl_term", [](const Vec& z_t, const Vec& z_s, double tau) { return distill::kd_kl_term(z_t, z_s, tau); },
        py::arg("z_t"), py::arg("z_s"), py::arg("tau"));
  m.def("kd_mse_term", [](const Vec& z_t, const Vec& z_s) { return distill::kd_mse_term(z_t, z_s); },
        py::arg("z_t"), py::arg("z_s"));
  m.def("kd_loss", [](const std::vector<double>& z_s, const std::vector<double>& z_t, const std::vector<double>& y,
                      double alpha, double tau, const std::string& loss) {
          return distill::kd_loss(make_config(alpha, tau, loss), z_s, z_t, y);
        }, py::arg("z_s"), py::arg("z_t"), py::arg("y"), py::arg("alpha") = 0.5, py::arg("tau") = 5.0,
        py::arg("loss") = "kd-mse");
  m.def("kd_loss_grad", [](const std::vector<double>& z_s, const std::vector<double>& z_t,
                           const std::vector<double>& y, double alpha, double tau, const std::string& loss) {
          return distill::kd_loss_grad(make_config(alpha, tau, loss), z_s, z_t, y);
        }, py::arg("z_s"), py::arg("z_t"), py::arg("y"), py::arg("alpha") = 0.5, py::arg("tau") = 5.0,
        py::arg("loss") = "kd-mse");

  m.def("builtin_spec_names", &nn::builtin_spec_names);
  m.def("length_chain", [](const std::string& spec) { return nn::resolve_spec(spec).length_chain(); },
        py::arg("spec"));
  m.def("spec_json", [](const std::string& spec) { return nn::to_json(nn::resolve_spec(spec)).dump(); },
        py::arg("spec"));

  m.def("metrics_json", [](const std::vector<int>& preds, const std::vector<int>& labels) {
          return eval::to_json(eval::compute_metrics(preds, labels)).dump();
        }, py::arg("predictions"), py::arg("labels"));
  m.def("metrics_from_counts_json", [](std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
          return eval::to_json(eval::metrics_from_counts(tp, fp, tn, fn)).dump();
        }, py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

  m.def("generate_synthetic", [](const std::string& spec_json, const std::string& out_dir) {
          const auto ds = eval::generate_synthetic(eval::synthetic_spec_from_json(nlohmann::json::parse(spec_json)));
          eval::save_dataset(out_dir, ds);
          return ds.size();
        }, py::arg("spec_json"), py::arg("out_dir"));

  m.def("attempts_distribution", &orchestrator::attempts_distribution, py::arg("crash_prob"),
        py::arg("max_resubmit") = 3);
  m.def("simulate_json", [](const std::string& config_json) {
          const auto cfg = orchestrator::simulation_config_from_json(nlohmann::json::parse(config_json));
          return orchestrator::summary_json(orchestrator::run_simulation(cfg)).dump();
        }, py::arg("config_json"));

  m.def("predict", &predict, py::arg("checkpoint"), py::arg("views"));
  m.def("cli", [](const std::vector<std::string>& args) {
          std::vector<std::string> argv{"maldistill"};
          argv.insert(argv.end(), args.begin(), args.end());
          std::ostringstream out, err;
          const int status = cli::dispatch(argv, out, err);
          return py::make_tuple(status, out.str(), err.str());
        }, py::arg("args"));
}
