#include <memory>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ptrig/comm_probability.hpp"
#include "ptrig/config.hpp"
#include "ptrig/exit_probability.hpp"
#include "ptrig/scenarios.hpp"
#include "ptrig/scheduling.hpp"
#include "ptrig/simulation.hpp"

namespace py = pybind11;

namespace {

using TablePtr = std::shared_ptr<ptrig::ExitProbTable>;

ptrig::RunConfig parse_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ptrig::ConfigError(std::string("config is not valid JSON: ") +
                             e.what());
  }
  return ptrig::config_from_json(doc);
}

py::dict record_dict(const ptrig::RunRecord& r) {
  const auto T = static_cast<py::ssize_t>(r.recorded_steps());
  const auto N = static_cast<py::ssize_t>(r.N);
  py::dict d;
  d["policy"] = std::string(ptrig::to_string(r.policy));
  d["scenario"] = r.scenario;
  d["seed"] = r.seed;
  d["config_fingerprint"] = ptrig::fingerprint_hex(r.config_fingerprint);
  d["E_bar"] = r.E_bar;
  d["U_bar"] = r.U_bar;
  d["metrics_defined"] = r.metrics_defined;
  d["diverged"] = r.diverged;
  d["divergence_step"] = r.divergence_step;
  d["utilization"] = py::array_t<double>(T, r.utilization.data());
  d["n_priority"] = py::array_t<int>(T, r.n_priority.data());
  d["n_comm"] = py::array_t<int>(T, r.n_comm.data());
  d["eps_norm"] = py::array_t<double>({T, N}, r.eps_norm.data());
  d["z_norm"] = py::array_t<double>({T, N}, r.z_norm.data());
  d["granted"] = py::array_t<std::uint8_t>({T, N}, r.granted.data());
  d["triggered"] = py::array_t<std::uint8_t>({T, N}, r.triggered.data());
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Predictive triggering for multi-agent control over a slotted network";

  static py::exception<ptrig::Error> base(m, "PtrigError", PyExc_RuntimeError);
  static py::exception<ptrig::ConfigError> config_error(m, "ConfigError",
                                                        base.ptr());
  static py::exception<ptrig::TableFormatError> table_error(
      m, "TableFormatError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ptrig::ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const ptrig::TableFormatError& e) {
      py::set_error(table_error, e.what());
    } catch (const ptrig::Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<ptrig::ExitProbTable, TablePtr>(m, "ExitTable")
      .def_property_readonly("norm_grid",
                             [](const ptrig::ExitProbTable& t) { return t.norm_grid; })
      .def_property_readonly("values",
                             [](const ptrig::ExitProbTable& t) {
                               return py::array_t<double>(
                                   {t.grid_size(), t.max_steps + 1},
                                   t.values.data());
                             })
      .def_readonly("max_steps", &ptrig::ExitProbTable::max_steps)
      .def_readonly("delta", &ptrig::ExitProbTable::delta)
      .def_readonly("samples", &ptrig::ExitProbTable::samples)
      .def_property_readonly("fingerprint",
                             [](const ptrig::ExitProbTable& t) {
                               return ptrig::fingerprint_hex(t.spec_fingerprint);
                             })
      .def("query", &ptrig::query_exit_probability, py::arg("z_norm"),
           py::arg("steps"))
      .def("save", [](const ptrig::ExitProbTable& t,
                      const std::string& path) { ptrig::save_table(t, path); })
      .def("__eq__", [](const ptrig::ExitProbTable& a,
                        const ptrig::ExitProbTable& b) { return a == b; });

  m.def(
      "build_exit_table",
      [](const ptrig::Matrix& A_cl, const ptrig::Matrix& sigma_w, double delta,
         double dt, int grid_size, int max_steps, int samples,
         std::uint64_t seed) {
        ptrig::ErrorProcessSpec spec{A_cl, sigma_w, delta, dt};
        py::gil_scoped_release release;
        return std::make_shared<ptrig::ExitProbTable>(
            ptrig::build_exit_table(spec, grid_size, max_steps, samples, seed));
      },
      py::arg("A_cl"), py::arg("sigma_w"), py::arg("delta"), py::arg("dt"),
      py::arg("grid_size") = 51, py::arg("max_steps") = 2,
      py::arg("samples") = 10000, py::arg("seed") = 1);
  m.def("load_table", [](const std::string& path) {
    return std::make_shared<ptrig::ExitProbTable>(ptrig::load_table(path));
  });

  m.def(
      "m_step_probability",
      [](const ptrig::ExitProbTable& t, int M, double z_norm, double p_lower) {
        return ptrig::m_step_probability(t, {M, t.delta, p_lower}, z_norm);
      },
      py::arg("table"), py::arg("M"), py::arg("z_norm"), py::arg("p_lower") = 0.0);
  m.def("chain_expansion", &ptrig::chain_expansion, py::arg("table"),
        py::arg("M"), py::arg("z_norm"));
  m.def("sequence_weights", &ptrig::sequence_weights, py::arg("table"),
        py::arg("M"), py::arg("z_norm"));
  m.def("quantize", &ptrig::quantize, py::arg("probability"));

  m.def(
      "network_utilization",
      [](int N, int K, int n_x, const std::string& policy, int n_priority,
         int n_comm) {
        return ptrig::network_utilization({N, K, n_x, ptrig::parse_policy(policy)},
                                          n_priority, n_comm);
      },
      py::arg("N"), py::arg("K"), py::arg("n_x"), py::arg("policy"),
      py::arg("n_priority"), py::arg("n_comm"));

  m.def(
      "solve_dare",
      [](const ptrig::Matrix& A, const ptrig::Matrix& B, const ptrig::Matrix& Q,
         const ptrig::Matrix& R) {
        auto s = ptrig::solve_dare(A, B, Q, R);
        return py::make_tuple(s.P, s.F);
      },
      py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"));

  m.def("preset_names", &ptrig::preset_names);
  m.def("preset", &ptrig::preset_text, py::arg("name"));
  m.def(
      "resolve_config",
      [](const std::string& json_text) {
        return ptrig::config_to_json(parse_config(json_text)).dump();
      },
      py::arg("config_json"),
      "Validated canonical form of a config document (JSON text).");
  m.def(
      "build_table_for",
      [](const std::string& json_text) {
        const auto config = parse_config(json_text);
        py::gil_scoped_release release;
        return std::make_shared<ptrig::ExitProbTable>(
            ptrig::build_table_for(config));
      },
      py::arg("config_json"));
  m.def(
      "run",
      [](const std::string& json_text, TablePtr table) {
        const auto config = parse_config(json_text);
        ptrig::RunRecord record;
        {
          py::gil_scoped_release release;
          record = ptrig::run(config, std::move(table));
        }
        return record_dict(record);
      },
      py::arg("config_json"), py::arg("table") = nullptr);
  m.def(
      "run_csv",
      [](const std::string& json_text, TablePtr table) {
        const auto record = ptrig::run(parse_config(json_text), std::move(table));
        std::ostringstream os;
        ptrig::write_run_csv(record, os);
        return os.str();
      },
      py::arg("config_json"), py::arg("table") = nullptr);
}
