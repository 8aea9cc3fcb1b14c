// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Python module _poslab. Configs cross the boundary as dicts of dotted keys
// (the same keys as the config files); arrays as numpy arrays.

#include <pybind11/functional.h>
#include <pybind11/iostream.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>

#include "cli.hpp"
#include "poslab/error.hpp"
#include "poslab/experiments.hpp"
#include "poslab/positional.hpp"
#include "poslab/probing.hpp"
#include "poslab/training.hpp"

namespace py = pybind11;
using namespace poslab;

namespace {

using Model = TransformerLM<float>;
using IdArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

std::string value_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::float_>(v)) return format_double(v.cast<double>());
  return py::str(v).cast<std::string>();
}

KeyValues to_kv(const py::dict& d, const std::string& prefix = {}) {
  KeyValues kv;
  for (const auto& [k, v] : d) {
    std::string key = py::str(k).cast<std::string>();
    if (!prefix.empty() && key.rfind(prefix, 0) != 0) key = prefix + key;
    kv[key] = value_text(v);
  }
  return kv;
}

py::dict from_kv(const KeyValues& kv) {
  py::dict d;
  for (const auto& [k, v] : kv) d[py::str(k)] = v;
  return d;
}

ModelConfig model_config(const py::dict& d) {
  const KeyValues kv = to_kv(d, "model.");
  const auto keys = ModelConfig::keys();
  for (const auto& [k, v] : kv) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      std::string msg = "unknown model key '" + k + "'";
      const std::string near = closest_match(k, keys);
      if (!near.empty()) msg += " (did you mean '" + near + "'?)";
      throw UsageError(msg);
    }
  }
  ModelConfig c = ModelConfig::from_key_values(kv);
  c.validate();
  return c;
}

RunConfig run_config(const py::dict& d) {
  RunConfig r = RunConfig::from_key_values(to_kv(d));
  r.validate();
  return r;
}

std::span<const std::int32_t> id_span(const IdArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

IdArray to_array(std::span<const std::int32_t> ids) {
  IdArray a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(ids.size())});
  std::copy(ids.begin(), ids.end(), a.mutable_data());
  return a;
}

template <typename T>
py::array_t<T> tensor_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> a(shape);
  const auto d = t.data();
  std::copy(d.begin(), d.end(), a.mutable_data());
  return a;
}

py::object forward(const Model& m, const IdArray& tokens, bool hidden) {
  if (tokens.ndim() != 2) throw DimensionError("tokens must be a [batch, length] array");
  const auto b = static_cast<std::size_t>(tokens.shape(0)), l = static_cast<std::size_t>(tokens.shape(1));
  Model::Output out;
  {
    py::gil_scoped_release release;
    out = m.forward(id_span(tokens), b, l, hidden);
  }
  py::array_t<float> logits = tensor_array(out.logits);
  if (!hidden) return logits;
  py::list states;
  for (const auto& h : out.hidden) states.append(tensor_array(h));
  return py::make_tuple(logits, states);
}

py::dict record_dict(const TrainRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["split"] = r.split;
  d["loss"] = r.loss;
  d["perplexity"] = r.perplexity;
  d["lr"] = r.lr;
  d["seconds"] = r.seconds;
  return d;
}

py::dict row_dict(const ReportRow& r) {
  py::dict d;
  d["experiment"] = r.experiment;
  d["strategy"] = r.strategy;
  d["objective"] = r.objective;
  d["size"] = r.size;
  d["seq_len"] = r.seq_len;
  d["metric"] = r.metric;
  d["value"] = r.value;
  d["seed"] = r.seed;
  d["status"] = r.status;
  return d;
}

py::dict test_dict(const PairedTest& t) {
  py::dict d;
  d["statistic"] = t.statistic;
  d["z"] = t.z;
  d["p_value"] = t.p_value;
  d["n"] = t.n;
  return d;
}

}  // namespace

PYBIND11_MODULE(_poslab, m) {
  m.doc() = "Positional encoding laboratory: small transformer LMs, probes and experiments";

  auto base = py::register_exception<Error>(m, "PoslabError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("positional_kinds", [] {
    std::vector<std::string> names;
    for (auto k : kAllPositionalKinds) names.emplace_back(positional_name(k));
    return names;
  });
  m.def("sinusoidal_table", [](std::size_t length, std::size_t dim) {
    return tensor_array(sinusoidal_table<double>(length, dim));
  }, py::arg("length"), py::arg("dim"));
  m.def("alibi_slopes", &alibi_slopes, py::arg("heads"));
  m.def("alibi_bias", [](std::size_t length, int heads, bool causal) {
    return tensor_array(alibi_bias<double>(length, alibi_slopes(heads), causal));
  }, py::arg("length"), py::arg("heads"), py::arg("causal") = true);
  m.def("random_baseline_mad", &random_baseline_mad, py::arg("length"));

  py::class_<Model>(m, "TransformerLM")
      .def(py::init([](const py::dict& config) { return Model(model_config(config)); }),
           py::arg("config"))
      .def_property_readonly("config", [](const Model& self) { return from_kv(self.config().to_key_values()); })
      .def("forward", &forward, py::arg("tokens"), py::arg("hidden") = false,
           "logits [B, L, V] for int token ids [B, L]; with hidden=True also the "
           "n_layers + 1 hidden states")
      .def("parameters", [](const Model& self) {
        py::dict d;
        for (const auto& p : self.parameters()) d[py::str(p.name)] = tensor_array(p.tensor);
        return d;
      })
      .def("count_params", &Model::count_params)
      .def("save", [](const Model& self, const std::filesystem::path& p) { save_checkpoint(self, p); },
           py::arg("path"))
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint<float>(p); },
                  py::arg("path"));

  m.def("tokenize_bytes", [](const py::bytes& text) { return to_array(tokenize_bytes(std::string(text))); },
        py::arg("text"));
  m.def("load_corpus", [](const std::filesystem::path& path, const std::string& tokenizer,
                          std::size_t top_k, double valid_fraction) {
    const Corpus c = load_corpus(path, parse_tokenizer_kind(tokenizer), top_k, valid_fraction);
    py::dict d;
    d["train"] = to_array(c.train());
    d["valid"] = to_array(c.valid());
    d["vocab_size"] = c.vocab_size;
    return d;
  }, py::arg("path"), py::arg("tokenizer") = "byte", py::arg("top_k") = 0,
        py::arg("valid_fraction") = kValidFraction);

  m.def("resolve_config", [](const py::dict& d) { return from_kv(run_config(d).to_key_values()); },
        py::arg("config"), "fully resolved run config; unknown keys raise UsageError");

  m.def("train", [](const py::dict& config, const std::function<void(py::dict)>& progress) {
    const RunConfig run = run_config(config);
    ProgressFn fn;
    if (progress) {
      fn = [&](const TrainRecord& r) {
        py::gil_scoped_acquire acquire;
        progress(record_dict(r));
      };
    }
    std::optional<TrainResult> result;
    {
      py::gil_scoped_release release;
      const Corpus corpus = load_run_corpus(run);
      result.emplace(train(run, corpus, fn));
    }
    py::list records;
    for (const auto& r : result->report.records) records.append(record_dict(r));
    return py::make_tuple(records, std::move(result->model));
  }, py::arg("config"), py::arg("progress") = nullptr,
        "train from a run config dict; returns (records, model)");

  m.def("evaluate_perplexity", [](const Model& model, const IdArray& stream) {
    py::gil_scoped_release release;
    return evaluate_perplexity(model, id_span(stream), model.config().max_seq_len);
  }, py::arg("model"), py::arg("stream"));
  m.def("per_segment_perplexity", [](const Model& model, const IdArray& stream, std::size_t n) {
    py::gil_scoped_release release;
    return per_segment_perplexity(model, id_span(stream), model.config().max_seq_len, n);
  }, py::arg("model"), py::arg("stream"), py::arg("n_segments") = 8);

  m.def("probe_layers", [](const Model& model, const IdArray& stream, std::size_t steps,
                           std::size_t batch, std::uint64_t seed, std::vector<std::size_t> layers,
                           std::size_t max_chunks) {
    ProbeConfig pc;
    pc.steps = steps;
    pc.batch = batch;
    pc.seed = seed;
    std::vector<ProbeResult> results;
    {
      py::gil_scoped_release release;
      results = probe_layers(model, id_span(stream), model.config().max_seq_len, pc, layers, max_chunks);
    }
    py::list out;
    for (const auto& r : results) {
      py::dict d;
      d["layer"] = r.layer;
      d["mad"] = r.mad;
      d["accuracy"] = r.accuracy;
      out.append(d);
    }
    return out;
  }, py::arg("model"), py::arg("stream"), py::arg("steps") = 2000, py::arg("batch") = 256,
        py::arg("seed") = 0, py::arg("layers") = std::vector<std::size_t>{}, py::arg("max_chunks") = 0);

  m.def("shuffle_prefix_eval", [](const Model& model, const IdArray& stream, std::size_t n,
                                  std::uint64_t seed, bool identity) {
    ShuffleOutcome o;
    {
      py::gil_scoped_release release;
      o = shuffle_prefix_eval(model, id_span(stream), n, seed, identity);
    }
    std::vector<std::size_t> chunk, index;
    std::vector<double> intact, shuffled;
    for (const auto& s : o.samples) {
      chunk.push_back(s.chunk);
      index.push_back(s.index);
      intact.push_back(s.intact_loss);
      shuffled.push_back(s.shuffled_loss);
    }
    py::dict d;
    d["chunk"] = py::array(py::cast(chunk));
    d["index"] = py::array(py::cast(index));
    d["intact_loss"] = py::array(py::cast(intact));
    d["shuffled_loss"] = py::array(py::cast(shuffled));
    d["mean_intact"] = o.mean_intact;
    d["mean_shuffled"] = o.mean_shuffled;
    d["test"] = test_dict(o.test);
    return d;
  }, py::arg("model"), py::arg("stream"), py::arg("n_samples") = 200, py::arg("seed") = 0,
        py::arg("identity") = false);

  m.def("wilcoxon_signed_rank_greater", [](const std::vector<double>& x, const std::vector<double>& y) {
    return test_dict(wilcoxon_signed_rank_greater(x, y));
  }, py::arg("x"), py::arg("y"), "one-sided signed-rank test of x > y");

  m.def("run_manifest", [](const std::string& text, const std::filesystem::path& output_root,
                           std::vector<std::size_t> only) {
    const Grid grid = parse_manifest(text);
    AblationOptions o;
    o.output_root = output_root;
    o.only = std::move(only);
    AblationResult r;
    {
      py::gil_scoped_release release;
      r = run_ablation(grid, o);
    }
    py::list rows;
    for (const auto& row : r.rows) rows.append(row_dict(row));
    return rows;
  }, py::arg("manifest"), py::arg("output_root") = std::filesystem::path{},
        py::arg("only") = std::vector<std::size_t>{}, "train a manifest grid; one row dict per cell");

  m.def("cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> full{"poslab"};
    full.insert(full.end(), args.begin(), args.end());
    py::scoped_ostream_redirect out(std::cout), err(std::cerr, py::module_::import("sys").attr("stderr"));
    return cli::run(full, std::cout, std::cerr);
  }, py::arg("args"), "run the command line tool in-process; returns the exit code");
}
