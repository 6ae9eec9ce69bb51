#include "cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cli/reports.hpp"
#include "squq/clients.hpp"
#include "squq/clustering.hpp"
#include "squq/conformal.hpp"
#include "squq/error.hpp"
#include "squq/ingest.hpp"
#include "squq/metrics.hpp"
#include "squq/simulator.hpp"
#include "squq/uq.hpp"

namespace squq::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

/// Runs fn(i) for i in [0, n) on `jobs` threads; the first exception wins.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::exception_ptr failure;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += jobs) fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t jobs, Fn&& fn) {
  std::vector<T> out(n);
  parallel_for(n, jobs, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

struct Common {
  double alpha = 0.5;
  std::string variant = "unnormalized";
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
};

Variant variant_or_throw(const std::string& text) {
  auto v = parse_variant(text);
  if (!v) throw Error(ErrorCode::InvalidConfig, "unknown variant '" + text + "'");
  return *v;
}

ClusteringConfig clustering_or_throw(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::NonPositiveAlpha, "--alpha must be a positive number");
  }
  return ClusteringConfig{alpha};
}

std::vector<double> parse_epsilons(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error(ErrorCode::InvalidConfig, "bad epsilon '" + item + "'");
    if (!(v > 0.0 && v < 1.0)) throw Error(ErrorCode::EpsilonOutOfRange, "epsilon " + item + " outside (0, 1)");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "--epsilons needs at least one value");
  return out;
}

/// Writes `<output>.manifest.json` next to an output file.
void write_manifest(const std::string& command, const json& config, const json& inputs, const fs::path& primary_output,
                    const json& outputs, Clock::time_point started) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["version"] = SQUQ_VERSION;
  m["duration_seconds"] = std::chrono::duration<double>(Clock::now() - started).count();
  write_file_atomic(fs::path(primary_output.string() + ".manifest.json"), m.dump(2) + "\n");
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// --- cluster ---------------------------------------------------------------

struct ClusterArgs {
  std::string input, output;
  Common common;
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const auto started = Clock::now();
  const auto cfg = clustering_or_throw(a.common.alpha);
  const auto records = load_corpus(a.input);
  const auto rows = parallel_map<json>(records.size(), a.common.jobs, [&](std::size_t i) {
    return assignments_to_json(records[i].query_id, cluster_record(records[i], cfg));
  });
  write_file_atomic(a.output, to_jsonl(rows));
  write_manifest("cluster", {{"alpha", cfg.alpha}, {"jobs", a.common.jobs}}, {{"input", a.input}}, a.output,
                 {{"assignments", a.output}}, started);
  out << "clustered " << records.size() << " records -> " << a.output << "\n";
  return kSuccess;
}

// --- uq ---------------------------------------------------------------------

struct UqArgs {
  std::string input, output;
  Common common;
};

int cmd_uq(const UqArgs& a, std::ostream& out) {
  const auto started = Clock::now();
  const auto cfg = clustering_or_throw(a.common.alpha);
  const Variant variant = variant_or_throw(a.common.variant);
  const auto records = load_corpus(a.input);
  const auto rows = parallel_map<json>(records.size(), a.common.jobs, [&](std::size_t i) {
    return uq_to_json(score_record(records[i], cfg, variant));
  });
  write_file_atomic(a.output, to_jsonl(rows));
  write_manifest("uq", {{"alpha", cfg.alpha}, {"variant", to_string(variant)}, {"jobs", a.common.jobs}},
                 {{"input", a.input}}, a.output, {{"uq", a.output}}, started);
  out << "scored " << records.size() << " records -> " << a.output << "\n";
  return kSuccess;
}

// --- calibrate ----------------------------------------------------------------

struct CalibrateArgs {
  std::string input, model_out;
  double epsilon = 0.1;
  bool omit_scores = false;
  Common common;
};

std::vector<PreparedRecord> prepare_all(std::vector<GenerationRecord> records, const ClusteringConfig& cfg,
                                        Variant variant, std::size_t jobs) {
  return parallel_map<PreparedRecord>(records.size(), jobs, [&](std::size_t i) {
    return prepare(std::move(records[i]), cfg, variant);
  });
}

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto started = Clock::now();
  const auto cfg = clustering_or_throw(a.common.alpha);
  const Variant variant = variant_or_throw(a.common.variant);
  quantile_rank(0, a.epsilon);  // rejects epsilon before any work
  const auto prepared = prepare_all(load_corpus(a.input), cfg, variant, a.common.jobs);
  const auto model = CalibrationModel::calibrate(calibration_scores(prepared), a.epsilon);
  write_file_atomic(a.model_out, model_to_json(model, !a.omit_scores, cfg.alpha, variant).dump(2) + "\n");
  write_manifest("calibrate",
                 {{"alpha", cfg.alpha}, {"variant", to_string(variant)}, {"epsilon", a.epsilon}, {"jobs", a.common.jobs}},
                 {{"input", a.input}}, a.model_out, {{"model", a.model_out}}, started);
  out << "calibrated on " << model.n_scores() << " cluster scores from " << prepared.size()
      << " records; threshold " << fmt_double(model.threshold()) << "\n";
  return kSuccess;
}

// --- predict ------------------------------------------------------------------

struct PredictArgs {
  std::string input, model, output;
  std::optional<double> alpha;
  std::optional<std::string> variant;
  std::size_t jobs = 1;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const auto started = Clock::now();
  const ModelFile mf = load_model(a.model);
  const auto cfg = clustering_or_throw(a.alpha.value_or(mf.alpha.value_or(0.5)));
  const Variant variant =
      a.variant ? variant_or_throw(*a.variant) : mf.variant.value_or(Variant::unnormalized);
  const auto records = load_corpus(a.input);
  const auto rows = parallel_map<json>(records.size(), a.jobs, [&](std::size_t i) {
    const ClusterSet cs = cluster_record(records[i], cfg);
    const auto masses = cluster_log_mass(records[i], cs, variant);
    return prediction_to_json(predict_set(records[i], cs, masses, mf.model));
  });
  write_file_atomic(a.output, to_jsonl(rows));
  write_manifest("predict",
                 {{"alpha", cfg.alpha}, {"variant", to_string(variant)}, {"epsilon", mf.model.epsilon()},
                  {"threshold", number_or_inf(mf.model.threshold())}, {"jobs", a.jobs}},
                 {{"input", a.input}, {"model", a.model}}, a.output, {{"predictions", a.output}}, started);
  out << "predicted " << records.size() << " sets (tau " << fmt_double(mf.model.threshold()) << ") -> " << a.output
      << "\n";
  return kSuccess;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string labels, report;
  std::optional<std::string> predictions, uq;
  std::string metrics = "auroc,auarc,aurac,point_accuracy";
  std::optional<std::string> epsilons;
  double calibration_fraction = 0.5;
  std::string split_strategy = "hash";
  std::string answer = "most_likely";
  bool curves = true;
  Common common;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto started = Clock::now();
  const auto cfg = clustering_or_throw(a.common.alpha);
  const Variant variant = variant_or_throw(a.common.variant);
  const AnswerSelection selection = [&] {
    if (a.answer == "most_likely") return AnswerSelection::most_likely;
    if (a.answer == "first") return AnswerSelection::first_response;
    throw Error(ErrorCode::InvalidConfig, "--answer must be most_likely or first");
  }();
  std::set<std::string> wanted;
  {
    std::stringstream ss(a.metrics);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (m.empty()) continue;
      static const std::set<std::string> known{"auroc", "auarc", "aurac", "point_accuracy"};
      if (!known.contains(m)) throw Error(ErrorCode::InvalidConfig, "unknown metric '" + m + "'");
      wanted.insert(m);
    }
  }
  const std::optional<std::vector<double>> epsilons =
      a.epsilons ? std::optional(parse_epsilons(*a.epsilons)) : std::nullopt;

  const auto records = load_corpus(a.labels);
  std::map<std::string, const GenerationRecord*> by_id;
  for (const auto& r : records) by_id[r.query_id] = &r;

  fs::path prefix(a.report);
  if (prefix.extension() == ".json") prefix.replace_extension();
  const fs::path report_json = prefix.string() + ".json";
  json report;
  json outputs{{"report", report_json.string()}};

  // Uncertainty per query: from --uq when given, otherwise recomputed.
  std::vector<LabeledScore> items;
  const bool want_uq_metrics = wanted.contains("auroc") || wanted.contains("auarc") || wanted.contains("aurac");
  if (want_uq_metrics && !records.empty()) {
    std::map<std::string, double> uncertainty;
    if (a.uq) {
      std::size_t line = 0;
      for (const json& row : read_jsonl(*a.uq)) {
        ++line;
        if (!row.contains("query_id") || !row.contains("semantic_entropy")) {
          throw Error(ErrorCode::SchemaError, "uq rows need query_id and semantic_entropy", line);
        }
        uncertainty[row["query_id"].get<std::string>()] = row["semantic_entropy"].get<double>();
      }
    } else {
      const auto scores = parallel_map<UqScore>(records.size(), a.common.jobs,
                                                [&](std::size_t i) { return score_record(records[i], cfg, variant); });
      for (const auto& s : scores) uncertainty[s.query_id] = s.semantic_entropy;
    }
    for (const auto& rec : records) {
      auto it = uncertainty.find(rec.query_id);
      if (it == uncertainty.end()) continue;
      const auto& label = rec.responses[primary_response(rec, selection)].correct;
      if (!label) throw Error(ErrorCode::MissingLabels, "record " + rec.query_id + " lacks correctness labels");
      items.push_back({rec.query_id, it->second, *label});
    }
    report["n_scored"] = items.size();
  }

  auto guarded = [&](const std::string& name, auto&& compute) {
    if (!wanted.contains(name)) return;
    try {
      report[name] = compute();
    } catch (const Error& e) {
      report[name] = nullptr;
      report[name + "_error"] = std::string(to_string(e.code()));
    }
  };
  guarded("auroc", [&] { return auroc(items); });
  guarded("auarc", [&] { return auarc(items); });
  guarded("aurac", [&] { return aurac(items); });
  guarded("point_accuracy", [&] { return point_accuracy(records); });

  if (a.curves && !items.empty()) {
    std::ostringstream csv;
    csv << "curve,rejection_fraction,accuracy\n";
    for (const auto& p : accuracy_rejection_curve(items))
      csv << "accuracy_rejection," << fmt_double(p.rejection_fraction) << "," << fmt_double(p.accuracy) << "\n";
    for (const auto& p : rejection_accuracy_curve(items))
      csv << "rejection_accuracy," << fmt_double(p.rejection_fraction) << "," << fmt_double(p.accuracy) << "\n";
    const fs::path curves = prefix.string() + ".curves.csv";
    write_file_atomic(curves, csv.str());
    outputs["curves"] = curves.string();
  }

  if (a.predictions) {
    std::size_t line = 0, covered = 0, total = 0, size_sum = 0;
    for (const json& row : read_jsonl(*a.predictions)) {
      const PredictionSet set = prediction_from_json(row, ++line);
      auto it = by_id.find(set.query_id);
      if (it == by_id.end()) {
        throw Error(ErrorCode::SchemaError, "query " + set.query_id + " not in --labels", line, "query_id");
      }
      ++total;
      size_sum += set.size();
      if (covers(set, *it->second)) ++covered;
    }
    report["prediction_coverage"] = total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
    report["prediction_mean_set_size"] = total ? static_cast<double>(size_sum) / static_cast<double>(total) : 0.0;
    report["n_predictions"] = total;
  }

  if (epsilons) {
    const SplitStrategy strategy = [&] {
      if (a.split_strategy == "hash") return SplitStrategy::by_query_hash;
      if (a.split_strategy == "order") return SplitStrategy::by_order;
      throw Error(ErrorCode::InvalidConfig, "--split must be hash or order");
    }();
    CorpusSplit parts = split(records, SplitSpec{a.calibration_fraction, a.common.seed, strategy});
    const auto cal = prepare_all(std::move(parts.calibration), cfg, variant, a.common.jobs);
    const auto test = prepare_all(std::move(parts.test), cfg, variant, a.common.jobs);
    const auto sweep = sweep_epsilons(calibration_scores(cal), test, *epsilons);

    std::ostringstream csv;
    csv << "epsilon,coverage,mean_set_size,tau\n";
    json rows = json::array();
    for (const auto& p : sweep) {
      csv << fmt_double(p.epsilon) << "," << fmt_double(p.coverage) << "," << fmt_double(p.mean_set_size) << ","
          << fmt_double(p.tau) << "\n";
      rows.push_back({{"epsilon", p.epsilon},
                      {"coverage", p.coverage},
                      {"mean_set_size", p.mean_set_size},
                      {"tau", number_or_inf(p.tau)}});
    }
    const fs::path sweep_csv = prefix.string() + ".csv";
    write_file_atomic(sweep_csv, csv.str());
    outputs["sweep"] = sweep_csv.string();
    report["sweep"] = std::move(rows);
    report["n_calibration"] = cal.size();
    report["n_test"] = test.size();
  }

  write_file_atomic(report_json, report.dump(2) + "\n");
  json inputs{{"labels", a.labels}};
  if (a.uq) inputs["uq"] = *a.uq;
  if (a.predictions) inputs["predictions"] = *a.predictions;
  write_manifest("eval",
                 {{"alpha", cfg.alpha},
                  {"variant", to_string(variant)},
                  {"metrics", a.metrics},
                  {"epsilons", epsilons ? json(*epsilons) : json(nullptr)},
                  {"calibration_fraction", a.calibration_fraction},
                  {"split", a.split_strategy},
                  {"seed", a.common.seed},
                  {"answer", a.answer}},
                 inputs, report_json, outputs, started);
  out << report.dump(2) << "\n";
  return kSuccess;
}

// --- simulate -----------------------------------------------------------------

struct SimulateArgs {
  SimConfig cfg;
  std::string dist = "uniform";
};

int cmd_simulate(SimulateArgs a, std::ostream& out) {
  auto dist = parse_distribution(a.dist);
  if (!dist) throw Error(ErrorCode::InvalidConfig, "unknown distribution '" + a.dist + "'");
  a.cfg.distribution = *dist;
  const CoverageResult r = simulate_coverage(a.cfg);

  double var = 0.0;
  for (double c : r.per_trial) var += (c - r.mean_coverage) * (c - r.mean_coverage);
  const double n = static_cast<double>(r.per_trial.size());
  const double se = r.per_trial.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
  const double floor = 1.0 - a.cfg.epsilon - 3.0 * r.binomial_sigma;
  const bool ok = r.meets_guarantee(a.cfg.epsilon);

  out << std::setprecision(6) << std::fixed;
  out << "epsilon            " << a.cfg.epsilon << "\n";
  out << "n_cal              " << a.cfg.n_cal << "\n";
  out << "n_test             " << a.cfg.n_test << "\n";
  out << "trials             " << a.cfg.trials << "\n";
  out << "distribution       " << to_string(a.cfg.distribution) << "\n";
  out << "seed               " << a.cfg.seed << "\n";
  out << "mean_coverage      " << r.mean_coverage << "\n";
  out << "ci95               [" << r.mean_coverage - 1.96 * se << ", " << r.mean_coverage + 1.96 * se << "]\n";
  out << "expected_coverage  " << r.expected_coverage << "\n";
  out << "binomial_sigma     " << r.binomial_sigma << "\n";
  out << "guarantee_floor    " << floor << "\n";
  out << "status             " << (ok ? "ok" : "FAIL") << "\n";
  out.unsetf(std::ios::floatfield);
  return ok ? kSuccess : kSelfCheckFailed;
}

// --- synth / split ------------------------------------------------------------

struct SynthArgs {
  SyntheticCorpusConfig cfg;
  std::string output;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto started = Clock::now();
  const auto records = generate_synthetic_corpus(a.cfg);
  write_corpus(fs::path(a.output), records);
  write_manifest("synth",
                 {{"n_queries", a.cfg.n_queries},
                  {"n_responses", a.cfg.n_responses},
                  {"max_groups", a.cfg.max_groups},
                  {"group_sizes", a.cfg.group_sizes},
                  {"noise", a.cfg.noise},
                  {"seed", a.cfg.seed}},
                 json::object(), a.output, {{"corpus", a.output}}, started);
  out << "wrote " << records.size() << " synthetic records -> " << a.output << "\n";
  return kSuccess;
}

struct SplitArgs {
  std::string input, calibration_out, test_out;
  double fraction = 0.5;
  std::string strategy = "hash";
  std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a, std::ostream& out) {
  const auto started = Clock::now();
  SplitStrategy strategy;
  if (a.strategy == "hash") strategy = SplitStrategy::by_query_hash;
  else if (a.strategy == "order") strategy = SplitStrategy::by_order;
  else throw Error(ErrorCode::InvalidConfig, "--strategy must be hash or order");
  const CorpusSplit parts = split(load_corpus(a.input), SplitSpec{a.fraction, a.seed, strategy});
  write_corpus(fs::path(a.calibration_out), parts.calibration);
  write_corpus(fs::path(a.test_out), parts.test);
  write_manifest("split", {{"fraction", a.fraction}, {"strategy", a.strategy}, {"seed", a.seed}},
                 {{"input", a.input}}, a.calibration_out,
                 {{"calibration", a.calibration_out}, {"test", a.test_out}}, started);
  out << parts.calibration.size() << " calibration / " << parts.test.size() << " test records\n";
  return kSuccess;
}

// --- generate -----------------------------------------------------------------

struct GenerateArgs {
  std::string questions, output;
  std::optional<std::string> endpoint, sidecar, fixtures;
  std::size_t n = 20;
  std::string model = "default";
  std::string api_key_env = "SQUQ_API_KEY";
  double temperature = 1.0;
  int max_tokens = 64;
  std::size_t max_retries = 3;
  long long backoff_ms = 500;
  long long max_backoff_ms = 8000;
  long long timeout_ms = 30000;
  std::size_t max_in_flight = 4;
  bool per_sample_requests = false;
  std::string prompt_template = "{context}\n\n{question}";
  std::uint64_t seed = 0;
};

std::vector<QuestionSpec> load_questions(const fs::path& path) {
  std::vector<QuestionSpec> out;
  std::size_t line = 0;
  for (const json& row : read_jsonl(path)) {
    ++line;
    if (!row.is_object() || !row.contains("question") || !row["question"].is_string()) {
      throw Error(ErrorCode::SchemaError, "each line needs a string question", line, "question");
    }
    QuestionSpec q;
    q.question = row["question"].get<std::string>();
    q.query_id = row.value("query_id", std::string{});
    if (row.contains("context") && row["context"].is_string()) q.context = row["context"].get<std::string>();
    if (row.contains("reference") && row["reference"].is_string()) q.reference = row["reference"].get<std::string>();
    out.push_back(std::move(q));
  }
  return out;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  const auto started = Clock::now();
  if (a.n < 1) throw Error(ErrorCode::InvalidConfig, "--n must be at least 1");
  const auto questions = load_questions(a.questions);

  ClientHooks hooks;
  hooks.on_retry = [&err](const RetryEvent& ev) {
    err << "retry: " << ev.endpoint << " attempt " << ev.attempt << " failed (" << ev.reason << "), waiting "
        << ev.delay.count() << " ms\n";
  };

  std::optional<RecordBuilder> builder;
  if (a.fixtures) {
    builder.emplace(FixtureStore::load(*a.fixtures));
  } else {
    if (!a.endpoint || !a.sidecar) {
      throw Error(ErrorCode::InvalidConfig, "--endpoint and --sidecar are required without --fixtures");
    }
    RetryPolicy retry{a.max_retries, std::chrono::milliseconds(a.backoff_ms), std::chrono::milliseconds(a.max_backoff_ms),
                      0.1};
    GeneratorConfig gen;
    gen.base_url = *a.endpoint;
    gen.api_key_env = a.api_key_env;
    gen.model_name = a.model;
    gen.n_samples = a.n;
    gen.temperature = a.temperature;
    gen.max_tokens = a.max_tokens;
    gen.timeout = std::chrono::milliseconds(a.timeout_ms);
    gen.retry = retry;
    gen.max_in_flight = a.max_in_flight;
    gen.use_n_parameter = !a.per_sample_requests;
    gen.prompt_template = a.prompt_template;
    gen.seed = a.seed;
    SidecarConfig side;
    side.base_url = *a.sidecar;
    side.timeout = std::chrono::milliseconds(a.timeout_ms);
    side.retry = retry;
    side.seed = a.seed;
    builder.emplace(GeneratorClient(gen, hooks), SidecarClient(side, hooks));
  }

  std::vector<GenerationRecord> records;
  records.reserve(questions.size());
  for (const auto& q : questions) records.push_back(builder->build(q));
  write_corpus(fs::path(a.output), records);
  write_manifest("generate",
                 {{"n", a.n},
                  {"model", a.model},
                  {"temperature", a.temperature},
                  {"max_tokens", a.max_tokens},
                  {"max_retries", a.max_retries},
                  {"api_key_env", a.api_key_env},
                  {"offline", a.fixtures.has_value()},
                  {"seed", a.seed}},
                 {{"questions", a.questions},
                  {"endpoint", a.endpoint ? json(*a.endpoint) : json(nullptr)},
                  {"sidecar", a.sidecar ? json(*a.sidecar) : json(nullptr)},
                  {"fixtures", a.fixtures ? json(*a.fixtures) : json(nullptr)}},
                 a.output, {{"corpus", a.output}}, started);
  out << "generated " << records.size() << " records -> " << a.output << "\n";
  return kSuccess;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::AuthError:
    case ErrorCode::EndpointError:
    case ErrorCode::MissingLogprobs:
    case ErrorCode::SidecarUnavailable:
    case ErrorCode::ShapeError:
      return kExternalService;
    default:
      return kUsageOrValidation;
  }
}

void add_common(CLI::App* sub, Common& c, bool with_variant) {
  sub->add_option("--alpha", c.alpha, "CRP rate parameter (> 0)")->capture_default_str();
  if (with_variant) {
    sub->add_option("--variant", c.variant, "unnormalized | length_normalized")->capture_default_str();
  }
  sub->add_option("--jobs", c.jobs, "worker threads")->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"squq: semantic clustering, semantic entropy and conformal prediction sets for sampled LLM answers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(SQUQ_VERSION));

  ClusterArgs cluster;
  auto* c_cluster = app.add_subcommand("cluster", "cluster each record's responses by semantic equivalence");
  c_cluster->add_option("--input", cluster.input, "corpus JSONL")->required();
  c_cluster->add_option("--output", cluster.output, "assignments JSONL")->required();
  add_common(c_cluster, cluster.common, false);

  UqArgs uq;
  auto* c_uq = app.add_subcommand("uq", "semantic entropy per record");
  c_uq->add_option("--input", uq.input, "corpus JSONL")->required();
  c_uq->add_option("--output", uq.output, "UQ JSONL")->required();
  add_common(c_uq, uq.common, true);

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "fit a conformal threshold on a calibration corpus");
  c_cal->add_option("--input", cal.input, "calibration corpus JSONL")->required();
  c_cal->add_option("--epsilon", cal.epsilon, "significance level in (0, 1)")->required();
  c_cal->add_option("--model-out", cal.model_out, "calibration model JSON")->required();
  c_cal->add_flag("--omit-scores", cal.omit_scores, "do not store the sorted calibration scores");
  add_common(c_cal, cal.common, true);

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "build prediction sets for a test corpus");
  c_pred->add_option("--input", pred.input, "test corpus JSONL")->required();
  c_pred->add_option("--model", pred.model, "calibration model JSON")->required();
  c_pred->add_option("--output", pred.output, "prediction sets JSONL")->required();
  c_pred->add_option("--alpha", pred.alpha, "override the model's alpha");
  c_pred->add_option("--variant", pred.variant, "override the model's variant");
  c_pred->add_option("--jobs", pred.jobs, "worker threads")->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "UQ metrics, prediction-set coverage and epsilon sweeps");
  c_eval->add_option("--labels", ev.labels, "labelled corpus JSONL")->required();
  c_eval->add_option("--report", ev.report, "report path prefix (writes <prefix>.json, .csv, .curves.csv)")->required();
  auto* opt_pred = c_eval->add_option("--predictions", ev.predictions, "prediction sets JSONL to score");
  auto* opt_uq = c_eval->add_option("--uq", ev.uq, "UQ JSONL; recomputed from --labels when absent");
  opt_pred->excludes(opt_uq);
  c_eval->add_option("--metrics", ev.metrics, "comma list of auroc,auarc,aurac,point_accuracy")->capture_default_str();
  c_eval->add_option("--epsilons", ev.epsilons, "comma list of significance levels to sweep");
  c_eval->add_option("--calibration-fraction", ev.calibration_fraction, "share of records used for calibration")
      ->capture_default_str();
  c_eval->add_option("--split", ev.split_strategy, "hash | order")->capture_default_str();
  c_eval->add_option("--answer", ev.answer, "query-level answer: most_likely | first")->capture_default_str();
  c_eval->add_option("--seed", ev.common.seed, "split seed")->capture_default_str();
  c_eval->add_flag("!--no-curves", ev.curves, "skip the curve CSV");
  add_common(c_eval, ev.common, true);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Monte-Carlo check of the conformal coverage guarantee");
  c_sim->add_option("--n-cal", sim.cfg.n_cal, "calibration scores per trial")->capture_default_str();
  c_sim->add_option("--n-test", sim.cfg.n_test, "test scores per trial")->capture_default_str();
  c_sim->add_option("--trials", sim.cfg.trials, "Monte-Carlo trials")->capture_default_str();
  c_sim->add_option("--epsilon", sim.cfg.epsilon, "significance level")->capture_default_str();
  c_sim->add_option("--seed", sim.cfg.seed, "PRNG seed")->capture_default_str();
  c_sim->add_option("--dist", sim.dist, "uniform | exponential | lognormal")->capture_default_str();
  c_sim->add_option("--jobs", sim.cfg.jobs, "worker threads")->capture_default_str();

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "write a synthetic corpus with planted semantic groups");
  c_syn->add_option("--output", syn.output, "corpus JSONL")->required();
  c_syn->add_option("--n-queries", syn.cfg.n_queries)->capture_default_str();
  c_syn->add_option("--n-responses", syn.cfg.n_responses)->capture_default_str();
  c_syn->add_option("--max-groups", syn.cfg.max_groups)->capture_default_str();
  c_syn->add_option("--group-sizes", syn.cfg.group_sizes, "fixed planted group sizes")->delimiter(',');
  c_syn->add_option("--noise", syn.cfg.noise)->capture_default_str();
  c_syn->add_option("--seed", syn.cfg.seed)->capture_default_str();

  SplitArgs sp;
  auto* c_split = app.add_subcommand("split", "split a corpus into calibration and test parts");
  c_split->add_option("--input", sp.input)->required();
  c_split->add_option("--calibration-out", sp.calibration_out)->required();
  c_split->add_option("--test-out", sp.test_out)->required();
  c_split->add_option("--fraction", sp.fraction)->capture_default_str();
  c_split->add_option("--strategy", sp.strategy, "hash | order")->capture_default_str();
  c_split->add_option("--seed", sp.seed)->capture_default_str();

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "sample responses and entailment scores into a corpus");
  c_gen->add_option("--questions", gen.questions, "JSONL of {query_id?, question, context?, reference?}")->required();
  c_gen->add_option("--output", gen.output, "corpus JSONL")->required();
  c_gen->add_option("--endpoint", gen.endpoint, "OpenAI-compatible base URL");
  c_gen->add_option("--sidecar", gen.sidecar, "entailment sidecar base URL");
  c_gen->add_option("--fixtures", gen.fixtures, "offline mode: recorded corpus keyed by question");
  c_gen->add_option("--n", gen.n, "samples per question")->capture_default_str();
  c_gen->add_option("--model", gen.model)->capture_default_str();
  c_gen->add_option("--api-key-env", gen.api_key_env, "environment variable holding the API key")->capture_default_str();
  c_gen->add_option("--temperature", gen.temperature)->capture_default_str();
  c_gen->add_option("--max-tokens", gen.max_tokens)->capture_default_str();
  c_gen->add_option("--max-retries", gen.max_retries)->capture_default_str();
  c_gen->add_option("--backoff-ms", gen.backoff_ms)->capture_default_str();
  c_gen->add_option("--max-backoff-ms", gen.max_backoff_ms)->capture_default_str();
  c_gen->add_option("--timeout-ms", gen.timeout_ms)->capture_default_str();
  c_gen->add_option("--max-in-flight", gen.max_in_flight)->capture_default_str();
  c_gen->add_flag("--per-sample-requests", gen.per_sample_requests, "one request per sample instead of n");
  c_gen->add_option("--prompt-template", gen.prompt_template)->capture_default_str();
  c_gen->add_option("--seed", gen.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::CallForVersion&) {
    out << SQUQ_VERSION << "\n";
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageOrValidation;
  }

  try {
    if (c_cluster->parsed()) return cmd_cluster(cluster, out);
    if (c_uq->parsed()) return cmd_uq(uq, out);
    if (c_cal->parsed()) return cmd_calibrate(cal, out);
    if (c_pred->parsed()) return cmd_predict(pred, out);
    if (c_eval->parsed()) return cmd_eval(ev, out);
    if (c_sim->parsed()) return cmd_simulate(sim, out);
    if (c_syn->parsed()) return cmd_synth(syn, out);
    if (c_split->parsed()) return cmd_split(sp, out);
    if (c_gen->parsed()) return cmd_generate(gen, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsageOrValidation;
  }
  return kUsageOrValidation;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("squq");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace squq::cli
