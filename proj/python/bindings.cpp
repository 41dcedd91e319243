#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "genret/backends.hpp"
#include "genret/calibration.hpp"
#include "genret/metrics.hpp"
#include "genret/scoring.hpp"
#include "genret/world.hpp"

namespace py = pybind11;
using namespace genret;

// Structured records cross the boundary as JSON text; the python package
// wraps these with json.dumps / json.loads.

namespace {

std::vector<ScoredInstance> scored_from(const std::string& text) {
  std::vector<ScoredInstance> out;
  for (const auto& row : Json::parse(text)) {
    ScoredInstance s;
    s.instance = row.at("instance").get<RankingInstance>();
    s.scores = row.at("scores").get<std::vector<double>>();
    s.method = method_from_string(row.value("method", "generative"));
    s.template_name = row.value("template", "");
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::string scored_to(const std::vector<ScoredInstance>& xs) {
  Json out = Json::array();
  for (const auto& s : xs) {
    out.push_back({{"instance", s.instance},
                   {"scores", s.scores},
                   {"method", to_string(s.method)},
                   {"template", s.template_name},
                   {"ranks", s.ranks()}});
  }
  return out.dump();
}

std::optional<Box> region_of(const std::optional<std::vector<double>>& r) {
  if (!r) return std::nullopt;
  if (r->size() != 4) throw Error(ErrorKind::Argument, "region needs [x, y, w, h]");
  return Box{(*r)[0], (*r)[1], (*r)[2], (*r)[3]};
}

}  // namespace

PYBIND11_MODULE(_genret, m) {
  m.doc() = "Generative retrieval scoring, metrics and calibration";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      py::object inst = exc(e.what());
      inst.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a genret command; returns (exit_code, stdout, stderr).");

  py::class_<Template>(m, "Template")
      .def(py::init([](const std::string& spec, const std::string& name) {
             return Template::parse(spec, std::nullopt, name);
           }),
           py::arg("spec"), py::arg("name") = "")
      .def_property_readonly("name", &Template::name)
      .def("format", &Template::format)
      .def(
          "render",
          [](const Template& t, std::optional<std::string> attribute, std::optional<std::string> object) {
            return t.render(attribute ? std::optional<std::string_view>(*attribute) : std::nullopt,
                            object ? std::optional<std::string_view>(*object) : std::nullopt);
          },
          py::arg("attribute") = py::none(), py::arg("object") = py::none())
      .def("__repr__", [](const Template& t) { return "Template('" + t.format() + "')"; });

  m.def(
      "make_world", [](std::uint64_t seed) { return Json(make_world(seed)).dump(); }, py::arg("seed"));
  m.def(
      "sample_scenes",
      [](const std::string& world, std::size_t n, std::size_t max_entities) {
        SceneSampler sampler(Json::parse(world).get<WorldSpec>());
        std::vector<SyntheticScene> scenes;
        for (std::size_t i = 0; i < n; ++i) scenes.push_back(sampler.sample_upto(max_entities));
        return Json(scenes).dump();
      },
      py::arg("world"), py::arg("n"), py::arg("max_entities") = 3);

  py::class_<OracleBackend>(m, "OracleBackend")
      .def(py::init([](const std::string& world, const std::string& scenes, double smoothing) {
             return std::make_unique<OracleBackend>(Json::parse(world).get<WorldSpec>(),
                                                    Json::parse(scenes).get<std::vector<SyntheticScene>>(),
                                                    OracleOptions{smoothing, true});
           }),
           py::arg("world"), py::arg("scenes"), py::arg("smoothing") = 1e-6)
      .def("vocabulary", &OracleBackend::vocabulary)
      .def(
          "next_token_distribution",
          [](const OracleBackend& b, const std::string& image_id, const TokenSeq& prefix,
             std::optional<std::vector<double>> region) {
            auto d = b.next_token_distribution({image_id, region_of(region)}, prefix);
            return py::make_tuple(d.probs, d.terminal_p);
          },
          py::arg("image_id"), py::arg("prefix"), py::arg("region") = py::none())
      .def(
          "generative_loss",
          [](const OracleBackend& b, const std::string& image_id, const TokenSeq& sentence,
             std::optional<std::vector<double>> region) {
            auto l = generative_loss(b, {image_id, region_of(region)}, sentence);
            return py::make_tuple(l.value, l.per_token);
          },
          py::arg("image_id"), py::arg("sentence"), py::arg("region") = py::none())
      .def(
          "contrastive_loss",
          [](const OracleBackend& b, const std::string& image_id, const TokenSeq& sentence,
             std::optional<std::vector<double>> region) {
            return contrastive_loss(b, {image_id, region_of(region)}, sentence).value;
          },
          py::arg("image_id"), py::arg("sentence"), py::arg("region") = py::none())
      .def(
          "rank",
          [](const OracleBackend& b, const std::string& instances, const Template& tmpl, const std::string& method,
             std::size_t parallelism) {
            std::vector<RankingInstance> xs;
            for (const auto& row : Json::parse(instances)) xs.push_back(row.get<RankingInstance>());
            std::vector<ScoredInstance> out;
            {
              py::gil_scoped_release release;
              for (auto& o : batch_rank(b, xs, tmpl, method_from_string(method), parallelism)) {
                if (!o.ok()) throw Error(*o.error_kind, o.error);
                out.push_back(std::move(*o.scored));
              }
            }
            return scored_to(out);
          },
          py::arg("instances"), py::arg("template"), py::arg("method") = "generative", py::arg("parallelism") = 1);

  m.def("average_precision", &average_precision, py::arg("ranked_labels"));
  m.def(
      "mean_rank", [](const std::string& scored) { return mean_rank(scored_from(scored)); }, py::arg("scored"));
  m.def(
      "mean_recall_at_k",
      [](const std::string& scored, std::size_t k) { return mean_recall_at_k(scored_from(scored), k); },
      py::arg("scored"), py::arg("k"));
  m.def(
      "mean_average_precision",
      [](const std::string& scored, bool per_instance) {
        return mean_average_precision(scored_from(scored), {},
                                      per_instance ? MapPooling::PerInstance : MapPooling::PerClass)
            .value;
      },
      py::arg("scored"), py::arg("per_instance") = false);
  m.def(
      "mean_balanced_accuracy",
      [](const std::string& scored, const std::vector<std::vector<double>>& probs, double threshold) {
        return mean_balanced_accuracy(scored_from(scored), probs, threshold);
      },
      py::arg("scored"), py::arg("probs"), py::arg("threshold"));
  m.def(
      "overall_f1_at_k",
      [](const std::string& scored, std::size_t k) { return overall_f1_at_k(scored_from(scored), k); },
      py::arg("scored"), py::arg("k"));

  m.def("calibrated_prob", &calibrated_prob, py::arg("loss"), py::arg("mu"), py::arg("sigma"));
  m.def(
      "fit_calibration",
      [](const std::string& scored, const std::string& config) {
        const auto cfg = FitConfig::from_json(Json::parse(config));
        const auto examples = calibration_examples(scored_from(scored));
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(examples, cfg);
        }
        return r.table.to_json().dump();
      },
      py::arg("scored"), py::arg("config") = "{}");
  m.def(
      "apply_calibration",
      [](const std::string& table, const std::string& scored) {
        return genret::apply(CalibrationTable::from_json(Json::parse(table)), scored_from(scored));
      },
      py::arg("table"), py::arg("scored"));
}
