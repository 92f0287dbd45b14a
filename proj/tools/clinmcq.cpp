#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clinmcq/app/manifest.hpp"
#include "clinmcq/eval/metrics.hpp"
#include "clinmcq/eval/review_server.hpp"
#include "clinmcq/forge/generate.hpp"
#include "clinmcq/grpo/fixture.hpp"
#include "clinmcq/infer/mock.hpp"
#include "clinmcq/ingest/split.hpp"
#include "clinmcq/ingest/synth.hpp"
#include "clinmcq/ingest/table.hpp"

namespace fs = std::filesystem;
using namespace clinmcq;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  bool verbose = false;
  std::vector<std::string> argv;
};

Globals g;

void log(const std::string& msg) {
  if (g.verbose) std::cerr << "[clinmcq] " << msg << '\n';
}

PipelineConfig base_config() {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (g.jobs) c.jobs = *g.jobs;
  c.grpo.seed = c.seed;
  return c;
}

template <typename T>
void overlay(T& field, const std::optional<T>& flag) {
  if (flag) field = *flag;
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void write_json_file(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(csv::read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

Manifest start_manifest(const std::string& sub, const PipelineConfig& c) {
  Manifest m;
  m.subcommand = sub;
  m.command = g.argv;
  m.config = to_json(c);
  m.config_hash = config_hash(c);
  return m;
}

void finish(Manifest& m, const std::string& primary_output) {
  const auto path = manifest_path_for(primary_output);
  write_manifest(m, path);
  log("wrote " + primary_output + " (manifest " + path + ")");
}

struct Dataset {
  Table table;
  std::optional<DatasetSplit> split;
  std::vector<PatientRecord> train;
};

Dataset load_dataset(const std::string& data, const std::string& schema, const std::string& split_path,
                     Manifest& m) {
  Dataset d;
  auto loaded = load_table(data, schema);
  for (const auto& w : loaded.warnings) log("warning: " + w);
  d.table = std::move(loaded.table);
  m.add_input(data);
  m.add_input(schema);
  if (!split_path.empty()) {
    d.split = split_from_json(read_json_file(split_path));
    m.add_input(split_path);
    d.train = select_records(d.table.records, d.split->train_ids);
  } else {
    d.train = d.table.records;
  }
  log("loaded " + std::to_string(d.table.records.size()) + " records x " +
      std::to_string(d.table.schema.size()) + " features");
  return d;
}

// synth ------------------------------------------------------------------------

struct SynthArgs {
  std::size_t patients = 11981;
  std::size_t features = 691;
  double missing_rate = 0.1;
  bool no_plant = false;
  std::string out, schema_out, truth_out;
};

void run_synth(const SynthArgs& a) {
  const auto cfg = base_config();
  SynthOptions opts;
  opts.plant_dependencies = !a.no_plant;
  const auto syn = synthesize_registry(a.patients, a.features, cfg.seed, a.missing_rate, opts);
  ensure_parent(a.out);
  write_table(syn.table, a.out);
  ensure_parent(a.schema_out);
  save_schema(syn.table.schema, a.schema_out);
  auto m = start_manifest("synth", cfg);
  m.parameters = {{"patients", a.patients}, {"features", a.features}, {"missing_rate", a.missing_rate},
                  {"plant_dependencies", opts.plant_dependencies}};
  json pairs = json::array();
  for (const auto& [s, d] : syn.planted_pairs) {
    pairs.push_back({syn.table.schema[s].name, syn.table.schema[d].name});
  }
  m.summary = {{"planted_pairs", pairs.size()}};
  if (!a.truth_out.empty()) {
    write_json_file(a.truth_out, json{{"planted_pairs", pairs}});
    m.add_output(a.truth_out);
  }
  m.add_output(a.out);
  m.add_output(a.schema_out);
  finish(m, a.out);
}

// split ------------------------------------------------------------------------

struct SplitArgs {
  std::string data, schema, out;
  std::optional<std::size_t> n_test;
};

void run_split(const SplitArgs& a) {
  auto cfg = base_config();
  overlay(cfg.n_test, a.n_test);
  auto m = start_manifest("split", cfg);
  const auto d = load_dataset(a.data, a.schema, "", m);
  const auto s = split_holdout(d.table.records, cfg.n_test, cfg.seed);
  write_json_file(a.out, to_json(s));
  m.parameters = {{"n_test", cfg.n_test}};
  m.summary = {{"n_train", s.train_ids.size()}, {"n_test", s.test_ids.size()}};
  m.add_output(a.out);
  finish(m, a.out);
}

// filter -----------------------------------------------------------------------

struct FilterArgs {
  std::string data, schema, split, out, matrix_out;
  std::optional<double> threshold;
  std::optional<std::size_t> bins;
};

void run_filter(const FilterArgs& a) {
  auto cfg = base_config();
  overlay(cfg.mi_threshold, a.threshold);
  overlay(cfg.mi_bins, a.bins);
  cfg.validate();
  auto m = start_manifest("filter", cfg);
  const auto d = load_dataset(a.data, a.schema, a.split, m);
  const auto matrix = build_dependence_matrix(d.train, d.table.schema, cfg.nmi_options(), cfg.executor());
  const auto filter = build_redundancy_filter(matrix, cfg.mi_threshold);
  write_json_file(a.out, to_json(filter, d.table.schema));
  m.add_output(a.out);
  if (!a.matrix_out.empty()) {
    write_json_file(a.matrix_out, to_json(matrix, d.table.schema, records_fingerprint(d.train)));
    m.add_output(a.matrix_out);
  }
  std::size_t pairs = 0;
  for (const auto& e : filter.excluded) pairs += e.size();
  m.parameters = {{"threshold", cfg.mi_threshold}, {"bins", cfg.mi_bins}, {"records", d.train.size()}};
  m.summary = {{"excluded_pairs", pairs}};
  finish(m, a.out);
}

// generate ---------------------------------------------------------------------

struct GenerateArgs {
  std::string data, schema, split, filter, out, subset, mode = "sampled", templates;
  bool no_filter = false;
  std::optional<std::size_t> count;
  std::vector<std::string> targets;
};

void run_generate(const GenerateArgs& a) {
  auto cfg = base_config();
  overlay(cfg.question_count, a.count);
  if (!a.templates.empty()) cfg.templates_dir = a.templates;
  cfg.validate();
  auto m = start_manifest("generate", cfg);
  const auto d = load_dataset(a.data, a.schema, a.split, m);
  const auto& schema = d.table.schema;
  const auto exec = cfg.executor();

  std::string subset = a.subset.empty() ? (d.split ? "train" : "all") : a.subset;
  std::vector<PatientRecord> records;
  if (subset == "train") {
    records = d.train;
  } else if (subset == "test") {
    if (!d.split) throw InvalidArgument("--subset test requires --split");
    records = select_records(d.table.records, d.split->test_ids);
  } else if (subset == "all") {
    records = d.table.records;
  } else {
    throw InvalidArgument("--subset must be train, test or all");
  }

  std::optional<RedundancyFilter> filter;
  if (!a.filter.empty()) {
    filter = redundancy_filter_from_json(read_json_file(a.filter), schema);
    m.add_input(a.filter);
  } else if (!a.no_filter) {
    log("computing redundancy filter on " + std::to_string(d.train.size()) + " records");
    filter = build_redundancy_filter(build_dependence_matrix(d.train, schema, cfg.nmi_options(), exec),
                                     cfg.mi_threshold);
  }
  log("fitting distractor models");
  const DistractorEngine engine(d.train, schema, cfg.engine_options(), exec);
  for (const auto& w : engine.warnings()) log("warning: " + w);
  const TemplateSet templates = cfg.templates_dir ? TemplateSet::from_directory(*cfg.templates_dir) : TemplateSet{};

  GenerateConfig gc;
  gc.count = cfg.question_count;
  gc.seed = cfg.seed;
  if (a.mode == "exhaustive") {
    gc.mode = GenerationMode::Exhaustive;
  } else if (a.mode != "sampled") {
    throw InvalidArgument("--mode must be sampled or exhaustive");
  }
  for (const auto& t : a.targets) gc.targets.push_back(schema.find(t));

  auto out = open_out(a.out);
  json header{{"seed", cfg.seed},
              {"mode", a.mode},
              {"subset", subset},
              {"count", gc.mode == GenerationMode::Sampled ? json(gc.count) : json(nullptr)},
              {"config_hash", config_hash(cfg)},
              {"filter", filter ? json(filter->threshold) : json(nullptr)}};
  QuestionWriter writer(out, header);
  const auto sum = generate_dataset(records, schema, filter ? &*filter : nullptr, engine, templates, gc, writer, exec);
  out.close();
  for (const auto& w : sum.warnings) std::cerr << "warning: " << w << '\n';
  m.parameters = {{"mode", a.mode}, {"subset", subset}, {"count", gc.count}, {"targets", a.targets},
                  {"filter", a.filter.empty() ? (a.no_filter ? "none" : "computed") : "file"}};
  m.summary = {{"emitted", sum.emitted}, {"eligible_pairs", sum.eligible_pairs}, {"failures", sum.failures},
               {"warnings", sum.warnings}};
  if (!sum.accounting.empty()) {
    json acc = json::array();
    for (const auto& t : sum.accounting) acc.push_back(to_json(t));
    m.summary["accounting"] = acc;
  }
  m.add_output(a.out);
  finish(m, a.out);
}

// train-toy --------------------------------------------------------------------

struct TrainArgs {
  std::string questions, out, policy_out;
  std::optional<std::size_t> separable;
  std::optional<std::size_t> steps, group_size, batch;
  std::optional<double> lr;
  double holdout = 0.2;
  std::size_t eval_every = 10;
};

void run_train_toy(const TrainArgs& a) {
  auto cfg = base_config();
  overlay(cfg.grpo_steps, a.steps);
  overlay(cfg.grpo.group_size, a.group_size);
  overlay(cfg.grpo.batch_questions, a.batch);
  overlay(cfg.grpo.learning_rate, a.lr);
  cfg.validate();
  auto m = start_manifest("train-toy", cfg);
  std::vector<Question> qs;
  if (a.separable) {
    qs = separable_questions(*a.separable, cfg.seed);
  } else if (!a.questions.empty()) {
    qs = read_question_file(a.questions).questions;
    m.add_input(a.questions);
  } else {
    throw InvalidArgument("train-toy needs --questions or --separable");
  }
  const auto run = train_toy(qs, cfg.grpo, {cfg.grpo_steps, a.holdout, a.eval_every}, cfg.executor());
  {
    auto out = open_out(a.out);
    write_curve(out, run.curve);
  }
  m.add_output(a.out);
  if (!a.policy_out.empty()) {
    write_json_file(a.policy_out, json{{"theta", run.policy.theta}});
    m.add_output(a.policy_out);
  }
  m.parameters = {{"steps", cfg.grpo_steps}, {"separable", a.separable ? json(*a.separable) : json(nullptr)},
                  {"holdout_fraction", a.holdout}, {"eval_every", a.eval_every}};
  m.summary = {{"n_train", run.n_train},
               {"n_holdout", run.n_holdout},
               {"initial_holdout_accuracy", run.curve.front().holdout_accuracy},
               {"final_holdout_accuracy", run.curve.back().holdout_accuracy}};
  finish(m, a.out);
  std::cout << m.summary.dump() << '\n';
}

// infer ------------------------------------------------------------------------

struct InferArgs {
  std::string questions, out, mock, endpoint_url, model, model_tag, transcript;
  std::optional<std::size_t> max_in_flight, max_tokens;
  std::optional<double> temperature;
  bool no_forced = false;
};

void run_infer(const InferArgs& a) {
  auto cfg = base_config();
  if (!a.endpoint_url.empty()) cfg.endpoint.endpoint_url = a.endpoint_url;
  if (!a.model.empty()) cfg.endpoint.model_name = a.model;
  if (!a.model_tag.empty()) cfg.model_tag = a.model_tag;
  overlay(cfg.endpoint.max_in_flight, a.max_in_flight);
  overlay(cfg.max_tokens, a.max_tokens);
  overlay(cfg.temperature, a.temperature);
  auto m = start_manifest("infer", cfg);
  const auto file = read_question_file(a.questions);
  m.add_input(a.questions);

  std::unique_ptr<Client> backend;
  if (!a.mock.empty()) {
    backend = std::make_unique<MockClient>(load_mock_fixtures(a.mock));
    m.add_input(a.mock);
  } else {
    backend = std::make_unique<OpenAiClient>(cfg.endpoint);
  }
  Transcript transcript;
  TranscriptClient logged(*backend, transcript);
  BoundedClient bounded(logged, cfg.endpoint.max_in_flight);
  InferOptions opts;
  opts.model_tag = cfg.model_tag;
  opts.max_tokens = cfg.max_tokens;
  opts.temperature = cfg.temperature;
  opts.max_in_flight = cfg.endpoint.max_in_flight;
  opts.forced = !a.no_forced;
  std::vector<Prediction> preds;
  try {
    preds = run_inference(file.questions, bounded, opts);
  } catch (...) {
    if (!a.transcript.empty()) {
      auto t = open_out(a.transcript);
      transcript.write(t);
    }
    throw;
  }
  {
    auto out = open_out(a.out);
    write_predictions(out, preds);
  }
  m.add_output(a.out);
  if (!a.transcript.empty()) {
    {
      auto t = open_out(a.transcript);
      transcript.write(t);
    }
    m.add_output(a.transcript);
  }
  std::size_t forced = 0, extracted = 0, none = 0;
  for (const auto& p : preds) {
    forced += p.forced_letter.has_value();
    extracted += p.extracted_letter.has_value();
    none += !p.final_letter.has_value();
  }
  m.parameters = {{"backend", a.mock.empty() ? "endpoint" : "mock"}, {"forced_choice", opts.forced}};
  m.summary = {{"predictions", preds.size()}, {"forced", forced}, {"extracted", extracted}, {"unanswered", none}};
  finish(m, a.out);
}

// evaluate / report ------------------------------------------------------------

struct EvaluateArgs {
  std::string questions, predictions, out, model_tag;
};

void run_evaluate(const EvaluateArgs& a) {
  const auto cfg = base_config();
  auto m = start_manifest("evaluate", cfg);
  const auto file = read_question_file(a.questions);
  m.add_input(a.questions);
  const auto preds = read_prediction_file(a.predictions);
  m.add_input(a.predictions);
  auto report = score_metrics(file, preds, a.model_tag);
  report.config_hash = config_hash(cfg);
  const auto j = to_json(report);
  write_json_file(a.out, j);
  m.add_output(a.out);
  m.summary = {{"n_evaluated", report.n_evaluated}, {"n_correct", report.n_correct}, {"accuracy", report.accuracy}};
  finish(m, a.out);
  std::cout << m.summary.dump() << '\n';
}

struct ReportArgs {
  std::string report, out, plot;
};

void run_report(const ReportArgs& a) {
  const auto cfg = base_config();
  auto m = start_manifest("report", cfg);
  const auto report = eval_report_from_json(read_json_file(a.report));
  m.add_input(a.report);
  const auto ranking = report_per_feature(report);
  {
    auto out = open_out(a.out);
    write_ranking_tsv(out, ranking);
  }
  m.add_output(a.out);
  if (!a.plot.empty()) {
    write_json_file(a.plot, ranking_plot_json(ranking));
    m.add_output(a.plot);
  }
  m.summary = {{"ranked", ranking.ranked.size()}, {"excluded", ranking.excluded.size()}};
  finish(m, a.out);
}

// review -----------------------------------------------------------------------

struct ExportArgs {
  std::string questions, pred_a, pred_b, out, summaries;
  std::size_t n_items = 20;
};

void run_export_review(const ExportArgs& a) {
  const auto cfg = base_config();
  auto m = start_manifest("export-review", cfg);
  const auto file = read_question_file(a.questions);
  const auto pa = read_prediction_file(a.pred_a);
  const auto pb = read_prediction_file(a.pred_b);
  m.add_input(a.questions);
  m.add_input(a.pred_a);
  m.add_input(a.pred_b);
  std::map<std::string, std::string> summaries;
  if (!a.summaries.empty()) {
    summaries = read_json_file(a.summaries).get<std::map<std::string, std::string>>();
    m.add_input(a.summaries);
  }
  const auto bundle = export_review_bundle(file.questions, pa, pb, a.n_items, cfg.seed, summaries);
  write_json_file(a.out, to_json(bundle));
  m.add_output(a.out);
  m.parameters = {{"n_items", a.n_items}};
  finish(m, a.out);
}

struct ServeArgs {
  std::string bundle, host = "127.0.0.1", static_dir;
  int port = 8080;
};

void run_serve_review(const ServeArgs& a) {
  ReviewStore store(review_bundle_from_json(read_json_file(a.bundle)), a.bundle);
  ReviewServer server(store, a.static_dir);
  std::cerr << "serving " << a.bundle << " on http://" << a.host << ":" << a.port << '\n';
  server.run(a.host, a.port);
}

struct WinRateArgs {
  std::string bundle, reference, out;
};

void run_win_rate(const WinRateArgs& a) {
  const auto w = win_rate_test(review_bundle_from_json(read_json_file(a.bundle)), a.reference);
  if (a.out.empty()) {
    std::cout << to_json(w).dump(2) << '\n';
  } else {
    write_json_file(a.out, to_json(w));
  }
}

}  // namespace

int main(int argc, char** argv) {
  g.argv.assign(argv, argv + argc);
  CLI::App app{"Clinical multiple-choice question toolkit"};
  app.set_version_flag("--version", CLINMCQ_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", g.config_path, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--jobs", g.jobs, "Worker threads (default: logical cores)")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", g.verbose, "Progress messages on stderr");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic registry table and schema");
  s->add_option("--patients", synth.patients, "Number of patients")->capture_default_str();
  s->add_option("--features", synth.features, "Number of features")->capture_default_str();
  s->add_option("--missing-rate", synth.missing_rate, "Per-cell missing probability")->capture_default_str();
  s->add_flag("--no-plant", synth.no_plant, "Do not plant dependent feature pairs");
  s->add_option("--out", synth.out, "Output CSV")->required();
  s->add_option("--schema-out", synth.schema_out, "Output schema JSON")->required();
  s->add_option("--truth-out", synth.truth_out, "Planted pairs JSON");
  s->callback([&] { run_synth(synth); });

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Random train/test holdout");
  sp->add_option("--data", split.data, "Table CSV")->required();
  sp->add_option("--schema", split.schema, "Schema JSON")->required();
  sp->add_option("--n-test", split.n_test, "Test patients (default 1000)");
  sp->add_option("--out", split.out, "Output split JSON")->required();
  sp->callback([&] { run_split(split); });

  FilterArgs filt;
  auto* f = app.add_subcommand("filter", "Mutual-information redundancy filter");
  f->add_option("--data", filt.data, "Table CSV")->required();
  f->add_option("--schema", filt.schema, "Schema JSON")->required();
  f->add_option("--split", filt.split, "Split JSON; the train part is used");
  f->add_option("--threshold", filt.threshold, "Exclusion threshold (default 0.5)");
  f->add_option("--bins", filt.bins, "Quantile bins for continuous features (default 10)");
  f->add_option("--out", filt.out, "Output filter JSON")->required();
  f->add_option("--matrix-out", filt.matrix_out, "Also write the dependence matrix");
  f->callback([&] { run_filter(filt); });

  GenerateArgs gen;
  auto* ge = app.add_subcommand("generate", "Build denoising questions");
  ge->add_option("--data", gen.data, "Table CSV")->required();
  ge->add_option("--schema", gen.schema, "Schema JSON")->required();
  ge->add_option("--split", gen.split, "Split JSON");
  ge->add_option("--subset", gen.subset, "train, test or all (default: train with --split, else all)");
  ge->add_option("--filter", gen.filter, "Redundancy filter JSON (default: computed)");
  ge->add_flag("--no-filter", gen.no_filter, "Do not hide redundant features");
  ge->add_option("--count", gen.count, "Questions to sample (default 30000)");
  ge->add_option("--mode", gen.mode, "sampled or exhaustive")->capture_default_str();
  ge->add_option("--target", gen.targets, "Restrict to these features (repeatable)");
  ge->add_option("--templates", gen.templates, "Prompt template directory");
  ge->add_option("--out", gen.out, "Output question file (JSONL)")->required();
  ge->callback([&] { run_generate(gen); });

  TrainArgs tr;
  auto* t = app.add_subcommand("train-toy", "GRPO on the linear-softmax toy policy");
  t->add_option("--questions", tr.questions, "Question file");
  t->add_option("--separable", tr.separable, "Use N generated separable questions instead");
  t->add_option("--steps", tr.steps, "Training steps (default 2000)");
  t->add_option("--group-size", tr.group_size, "Completions per question (default 7)");
  t->add_option("--batch", tr.batch, "Questions per step (default 35)");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--holdout", tr.holdout, "Held-out fraction")->capture_default_str();
  t->add_option("--eval-every", tr.eval_every, "Curve row interval")->capture_default_str();
  t->add_option("--out", tr.out, "Learning curve TSV")->required();
  t->add_option("--policy-out", tr.policy_out, "Final parameters JSON");
  t->callback([&] { run_train_toy(tr); });

  InferArgs inf;
  auto* in = app.add_subcommand("infer", "Reasoning + forced-choice predictions");
  in->add_option("--questions", inf.questions, "Question file")->required();
  in->add_option("--out", inf.out, "Predictions JSONL")->required();
  in->add_option("--mock", inf.mock, "Mock fixture file (offline)");
  in->add_option("--endpoint-url", inf.endpoint_url, "Completions endpoint base URL");
  in->add_option("--model", inf.model, "Model name sent to the endpoint");
  in->add_option("--model-tag", inf.model_tag, "Label stored with predictions");
  in->add_option("--transcript", inf.transcript, "Request/response log (JSONL)");
  in->add_option("--max-in-flight", inf.max_in_flight, "Concurrent requests (default 8)");
  in->add_option("--max-tokens", inf.max_tokens, "Reasoning token budget");
  in->add_option("--temperature", inf.temperature, "Sampling temperature");
  in->add_flag("--no-forced", inf.no_forced, "Skip forced-choice scoring");
  in->callback([&] { run_infer(inf); });

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Accuracy and macro-F1 per task");
  e->add_option("--questions", ev.questions, "Question file")->required();
  e->add_option("--predictions", ev.predictions, "Predictions JSONL")->required();
  e->add_option("--model-tag", ev.model_tag, "Override the report's model tag");
  e->add_option("--out", ev.out, "Report JSON")->required();
  e->callback([&] { run_evaluate(ev); });

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Per-feature ranking table");
  r->add_option("--report", rep.report, "Report JSON from evaluate")->required();
  r->add_option("--out", rep.out, "Ranking TSV")->required();
  r->add_option("--plot", rep.plot, "Plot series JSON");
  r->callback([&] { run_report(rep); });

  ExportArgs ex;
  auto* x = app.add_subcommand("export-review", "Blinded pairwise review bundle");
  x->add_option("--questions", ex.questions, "Question file")->required();
  x->add_option("--predictions-a", ex.pred_a, "Model A predictions")->required();
  x->add_option("--predictions-b", ex.pred_b, "Model B predictions")->required();
  x->add_option("--n-items", ex.n_items, "Items to sample")->capture_default_str();
  x->add_option("--summaries", ex.summaries, "JSON map question_id -> context summary");
  x->add_option("--out", ex.out, "Bundle JSON")->required();
  x->callback([&] { run_export_review(ex); });

  ServeArgs sv;
  auto* srv = app.add_subcommand("serve-review", "Serve the review API (annotations saved into the bundle)");
  srv->add_option("--bundle", sv.bundle, "Bundle JSON")->required();
  srv->add_option("--host", sv.host, "Bind address")->capture_default_str();
  srv->add_option("--port", sv.port, "Port")->capture_default_str();
  srv->add_option("--static", sv.static_dir, "Static UI assets");
  srv->callback([&] { run_serve_review(sv); });

  WinRateArgs wr;
  auto* w = app.add_subcommand("win-rate", "Unblinded win rates and sign test");
  w->add_option("--bundle", wr.bundle, "Annotated bundle JSON")->required();
  w->add_option("--reference-model", wr.reference, "Model whose wins are tested");
  w->add_option("--out", wr.out, "Output JSON (default stdout)");
  w->callback([&] { run_win_rate(wr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  } catch (const clinmcq::Error& ex) {
    std::string sub;
    for (const auto* sc : app.get_subcommands()) sub = sc->get_name();
    std::cerr << json{{"error", {{"kind", ex.kind()}, {"message", ex.what()}, {"subcommand", sub}}}}.dump() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << json{{"error", {{"kind", "internal"}, {"message", ex.what()}}}}.dump() << '\n';
    return 1;
  }
  return 0;
}
