#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tslm/checkpoint.hpp"
#include "tslm/datagen.hpp"
#include "tslm/decoder.hpp"
#include "tslm/denoiser.hpp"
#include "tslm/error.hpp"
#include "tslm/llm_client.hpp"
#include "tslm/metrics.hpp"
#include "tslm/optim.hpp"
#include "tslm/textrep.hpp"

namespace py = pybind11;
using namespace tslm;

namespace {

TimeSeries to_series(const std::vector<double>& values) {
  TimeSeries s{values};
  validate_series(s);
  return s;
}

PatternLabel parse_pattern(const std::string& trend, const std::string& location) {
  PatternLabel p;
  if (trend == "increase") {
    p.trend = Trend::increase;
  } else if (trend == "decrease") {
    p.trend = Trend::decrease;
  } else {
    throw ParameterError("trend must be increase|decrease");
  }
  if (location == "beginning") {
    p.location = Location::beginning;
  } else if (location == "middle") {
    p.location = Location::middle;
  } else if (location == "end") {
    p.location = Location::end;
  } else {
    throw ParameterError("location must be beginning|middle|end");
  }
  return p;
}

}  // namespace

PYBIND11_MODULE(_tslm_core, m) {
  m.doc() = "Time-series captioning pipeline core";

  py::register_exception<Error>(m, "TslmError");

  m.def(
      "phase_tag",
      [](const std::vector<double>& values) { return phase_tag(to_series(values)); },
      py::arg("values"),
      "Tagged text rendering of a series: <start> .. </start> <middle> .. <end> ..");

  m.def(
      "gen_synth_series",
      [](const std::string& trend, const std::string& location, std::int64_t length,
         std::uint64_t seed, double noise) {
        return gen_synth_series(parse_pattern(trend, location), length, seed, noise).values;
      },
      py::arg("trend"), py::arg("location"), py::arg("length"), py::arg("seed"),
      py::arg("noise") = 1.5, "Synthetic trend series with the named pattern");

  m.def(
      "caption_from_pattern",
      [](const std::string& trend, const std::string& location, std::uint64_t seed) {
        return caption_from_pattern(parse_pattern(trend, location), seed);
      },
      py::arg("trend"), py::arg("location"), py::arg("seed"));

  m.def("string_similarity", &string_similarity, py::arg("a"), py::arg("b"));

  m.def(
      "rouge_n",
      [](const std::string& candidate, const std::string& reference, std::int64_t n) {
        RougeScore s = rouge_n(candidate, reference, n);
        return py::make_tuple(s.precision, s.recall, s.f);
      },
      py::arg("candidate"), py::arg("reference"), py::arg("n") = 1);

  m.def(
      "rouge_l",
      [](const std::string& candidate, const std::string& reference) {
        RougeScore s = rouge_l(candidate, reference);
        return py::make_tuple(s.precision, s.recall, s.f);
      },
      py::arg("candidate"), py::arg("reference"));

  m.def(
      "truncate_distribution",
      [](const std::vector<double>& probs, std::int64_t top_k, double top_p) {
        Tensor t = truncate_distribution(
            Tensor::from_values({static_cast<std::int64_t>(probs.size())},
                                std::vector<double>(probs)),
            top_k, top_p);
        return std::vector<double>(t.values().begin(), t.values().end());
      },
      py::arg("probs"), py::arg("top_k"), py::arg("top_p"),
      "Hybrid top-k/top-p truncation with renormalization");

  m.def("lr_at_step", &lr_at_step, py::arg("step"), py::arg("base_lr"), py::arg("total_steps"),
        py::arg("warmup_ratio"));

  m.def(
      "score_stats",
      [](const std::vector<double>& scores) {
        ScoreStats st = score_stats(scores);
        py::dict d;
        d["count"] = st.count;
        d["mean"] = st.mean;
        d["std"] = st.stddev;
        d["min"] = st.min;
        d["max"] = st.max;
        d["suggested_interval"] = py::make_tuple(st.interval_low, st.interval_high);
        return d;
      },
      py::arg("scores"));

  m.def("summarize_captions",
        [](const std::vector<std::string>& captions) { return fallback_summarize(captions); },
        py::arg("captions"), "Offline frequency-ordered caption summarizer");

  m.def(
      "caption_series",
      [](const std::string& model_path, const std::string& ae_path,
         const std::vector<double>& values, std::int64_t k, std::int64_t top_k, double top_p,
         double temperature, std::uint64_t seed) {
        TslmModel model = load_tslm(model_path);
        AutoencoderModel ae = load_autoencoder(ae_path);
        SamplingConfig cfg;
        cfg.captions = k;
        cfg.top_k = top_k;
        cfg.top_p = top_p;
        cfg.temperature = temperature;
        cfg.seed = seed;
        return generate_captions(to_series(values), model, ae, cfg);
      },
      py::arg("model_path"), py::arg("ae_path"), py::arg("values"), py::arg("k") = 3,
      py::arg("top_k") = 50, py::arg("top_p") = 0.95, py::arg("temperature") = 0.95,
      py::arg("seed") = 0, "Generate K captions from saved checkpoints");

  m.def(
      "score_pair",
      [](const std::string& denoiser_path, const std::vector<double>& values,
         const std::string& caption) {
        DenoiserModel model = load_denoiser(denoiser_path);
        return model.similarity(to_series(values), caption);
      },
      py::arg("denoiser_path"), py::arg("values"), py::arg("caption"),
      "Cross-modal similarity from a saved denoiser checkpoint");

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
