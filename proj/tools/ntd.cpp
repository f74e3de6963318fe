// SPDX-License-Identifier: Apache-2.0
//
// ntd: calibrate thresholds, run detection and evaluations, serve verdicts.
//
// Exit status: 0 ok, 2 invalid input or configuration, 3 file or network I/O.
#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntd/batch.hpp"
#include "ntd/calibrate.hpp"
#include "ntd/detect.hpp"
#include "ntd/error.hpp"
#include "ntd/evalharness.hpp"
#include "ntd/featstore.hpp"
#include "ntd/gateway.hpp"
#include "ntd/kvdoc.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr std::uint64_t kDetectStream = 0x646574656374ULL;

using ntd::ClassId;
using ntd::Error;
using ntd::ErrorCode;

std::vector<ClassId> to_classes(const std::vector<std::uint32_t>& ids) {
  std::vector<ClassId> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(ClassId{id});
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return in;
}

std::vector<ntd::Query> read_queries(const std::string& path) {
  if (path == "-") return ntd::read_query_batch(std::cin);
  auto in = open_input(path);
  return ntd::read_query_batch(in);
}

// Writes through a temporary stream so a failed run leaves no partial file.
void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Shared option groups

struct SyntheticOptions {
  ntd::SyntheticSpec spec;

  void add(CLI::App& app) {
    app.add_option("--classes", spec.classes, "Number of synthetic classes")->capture_default_str();
    app.add_option("--dim", spec.dim, "Embedding dimension")->capture_default_str();
    app.add_option("--records", spec.records_per_class, "Validation records per class")->capture_default_str();
    app.add_option("--heldout", spec.heldout_per_class, "Held-out queries per class")->capture_default_str();
    app.add_option("--sigma", spec.noise_sigma, "Expected noise norm around each class mean")->capture_default_str();
    app.add_option("--angle", spec.min_angle_deg, "Pairwise angle between class means (degrees)")
        ->capture_default_str();
    app.add_option("--spread", spec.spread, "Per-class multiplier on sigma (one value per class)");
  }
};

struct CalibrationOptions {
  ntd::CalibrationConfig cfg;
  std::string metric = "pearson";
  std::string method = "ranking";
  std::string scope = "global";
  std::vector<std::uint32_t> classes;
  std::vector<std::uint32_t> excluded;

  void add(CLI::App& app) {
    app.add_option("--metric", metric, "cosine | pearson | tanimoto | tanimoto-rootnorm")->capture_default_str();
    app.add_option("--n", cfg.n, "Comparison set size")->capture_default_str();
    app.add_option("--rounds", cfg.rounds, "Calibration rounds (>= 100)")->capture_default_str();
    app.add_option("--method", method, "ranking | gamma")->capture_default_str();
    app.add_option("--scope", scope, "global | per-class | global-subset")->capture_default_str();
    app.add_option("--class", classes, "Class id for per-class or subset scope (repeatable)");
    app.add_option("--exclude-donor", excluded, "Class never used as an inter-class donor (repeatable)");
    app.add_option("--min-class-records", cfg.min_class_records, "Per-class size floor")->capture_default_str();
  }

  ntd::CalibrationConfig build(std::uint64_t seed) const {
    ntd::CalibrationConfig out = cfg;
    out.metric = ntd::parse_metric(metric);
    out.method = ntd::parse_method(method);
    out.scope.kind = ntd::parse_scope(scope);
    out.scope.classes = to_classes(classes);
    out.donor_exclusions = to_classes(excluded);
    out.seed = seed;
    return out;
  }
};

void add_seed(CLI::App& app, std::uint64_t& seed) {
  app.add_option("--seed", seed, "RNG seed")->envname("NTD_SEED")->capture_default_str();
}

// ---------------------------------------------------------------------------
// generate

struct GenerateCmd {
  SyntheticOptions synth;
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
  std::string queries_out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("generate", "Write a synthetic validation store (NTDF)");
    synth.add(*app);
    add_seed(*app, seed);
    app->add_option("--out", out, "Output NTDF path")->required();
    app->add_option("--manifest", manifest, "Also write the class manifest here");
    app->add_option("--queries-out", queries_out, "Write held-out queries as a query batch");
    app->callback([this] { run(); });
  }

  void run() {
    synth.spec.seed = seed;
    const ntd::SyntheticData data = ntd::generate_synthetic(synth.spec);
    ntd::store_write(data.store, out);
    if (!manifest.empty()) ntd::write_manifest(data.store, manifest);
    if (!queries_out.empty()) {
      std::string text;
      for (const auto& lq : data.heldout) text += ntd::format_query_line(lq.query) + '\n';
      write_text(queries_out, text);
    }
    std::cout << "wrote " << data.store.size() << " records, " << data.store.classes().size()
              << " classes, dim " << data.store.dim() << " to " << out << '\n';
  }
};

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateCmd {
  CalibrationOptions calib;
  std::string store;
  std::optional<double> frr;
  std::optional<double> far;
  std::uint64_t seed = 0;
  std::string out = "thresholds.txt";

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("calibrate", "Derive detection thresholds from a validation store");
    app->add_option("--store", store, "Validation store (NTDF)")->required();
    calib.add(*app);
    auto* f = app->add_option("--frr", frr, "Preset false rejection rate in (0, 1)");
    auto* a = app->add_option("--far", far, "Preset false acceptance rate in (0, 1)");
    f->excludes(a);
    add_seed(*app, seed);
    app->add_option("--out", out, "Threshold file to write")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    if (!frr && !far) throw Error(ErrorCode::kInvalidArgument, "one of --frr or --far is required");
    ntd::CalibrationConfig cfg = calib.build(seed);
    cfg.preset = frr ? ntd::Preset::frr(*frr) : ntd::Preset::far(*far);
    cfg.validate();
    const ntd::ValidationStore s = ntd::store_read(store);
    const ntd::CalibrationResult result = ntd::calibrate_detailed(s, cfg);
    result.table.save(out);

    const char* preset = cfg.preset.kind == ntd::PresetKind::kFrr ? "frr" : "far";
    std::cout << "metric=" << ntd::metric_name(cfg.metric) << " n=" << cfg.n << " rounds=" << cfg.rounds
              << " method=" << ntd::method_name(cfg.method) << " seed=" << cfg.seed << '\n';
    for (const auto& e : result.entries) {
      std::cout << e.key << "\tthreshold=" << ntd::format_real17(e.threshold) << "\tpreset=" << preset << ':'
                << ntd::format_shortest(cfg.preset.value) << "\toffline_frr=" << ntd::format_shortest(e.offline.frr)
                << "\toffline_far=" << ntd::format_shortest(e.offline.far) << '\n';
    }
    std::cout << "wrote " << out << '\n';
  }
};

// ---------------------------------------------------------------------------
// detect

struct DetectCmd {
  std::string store;
  std::string thresholds;
  std::string queries = "-";
  std::optional<std::size_t> n;
  std::optional<std::string> metric;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("detect", "Score a batch of queries, one verdict line each");
    app->add_option("--store", store, "Validation store (NTDF)")->required();
    app->add_option("--thresholds", thresholds, "Threshold file from calibrate")->required();
    app->add_option("--queries", queries, "Query batch file, '-' for stdin")->capture_default_str();
    app->add_option("--n", n, "Comparison set size (default: the calibrated n)");
    app->add_option("--metric", metric, "Similarity metric (default: the calibrated metric)");
    add_seed(*app, seed);
    app->callback([this] { run(); });
  }

  void run() {
    const auto s = std::make_shared<const ntd::ValidationStore>(ntd::store_read(store));
    ntd::ThresholdTable table = ntd::ThresholdTable::load(thresholds);
    const std::size_t nn = n.value_or(table.n());
    const ntd::Metric m = metric ? ntd::parse_metric(*metric) : table.metric();
    const std::vector<ntd::Query> batch = read_queries(queries);

    std::string text;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ntd::Rng rng(ntd::derive_seed(seed, kDetectStream, i));
      const ntd::Verdict v = ntd::detect_one(batch[i], *s, table, nn, m, rng);
      text += ntd::format_verdict_line(batch[i].input_id, v) + '\n';
    }
    std::cout << text;
  }
};

// ---------------------------------------------------------------------------
// eval

struct EvalCmd {
  SyntheticOptions synth;
  CalibrationOptions calib;
  double preset_frr = 0.05;
  std::string preset_text;
  std::optional<std::uint32_t> source;
  std::uint32_t target = 0;
  std::size_t clean_sessions = 1000;
  std::size_t trigger_sessions = 1000;
  int m = 1;
  std::uint64_t seed = 0;
  std::string axis;
  std::vector<std::string> values;
  std::string out = "-";
  std::string thresholds_out;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("eval", "Synthetic end-to-end evaluation; writes a CSV report");
    synth.add(*app);
    calib.add(*app);
    app->add_option("--preset-frr", preset_text, "Preset false rejection rate")->default_str("0.05");
    app->add_option("--source", source, "Trigger source class (default: any non-target class)");
    app->add_option("--target", target, "Trigger target class")->capture_default_str();
    app->add_option("--clean-sessions", clean_sessions, "Clean sessions")->capture_default_str();
    app->add_option("--trigger-sessions", trigger_sessions, "Trigger sessions")->capture_default_str();
    app->add_option("--m", m, "Trials per session")->capture_default_str();
    add_seed(*app, seed);
    auto* ax = app->add_option("--axis", axis, "Sweep axis: n | metric | preset_frr | scope");
    app->add_option("--values", values, "Sweep values (comma separated or repeated)")->delimiter(',')->needs(ax);
    app->add_option("--out", out, "CSV report path, '-' for stdout")->capture_default_str();
    app->add_option("--thresholds-out", thresholds_out, "Also write the calibrated thresholds (single run)");
    app->callback([this] { run(); });
  }

  void run() {
    if (preset_text.empty()) preset_text = "0.05";
    preset_frr = ntd::parse_real(preset_text);

    ntd::EvalConfig cfg;
    cfg.synthetic = synth.spec;
    cfg.synthetic.seed = seed;
    cfg.calibration = calib.build(seed);
    cfg.calibration.preset = ntd::Preset::frr(preset_frr);
    if (source) cfg.trigger_source = ClassId{*source};
    cfg.trigger_target = ClassId{target};
    cfg.clean_sessions = clean_sessions;
    cfg.trigger_sessions = trigger_sessions;
    cfg.m = m;
    cfg.seed = seed;

    std::vector<ntd::EvalReport> reports;
    if (!axis.empty()) {
      if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "--axis needs --values");
      if (!thresholds_out.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "--thresholds-out applies to a single run, not a sweep");
      }
      reports = ntd::sweep(ntd::parse_axis(axis), values, cfg);
    } else {
      ntd::EvalRun run = ntd::run_evaluation(cfg);
      run.report.axis = "preset_frr";
      run.report.value = preset_text;
      if (!thresholds_out.empty()) run.thresholds.save(thresholds_out);
      reports.push_back(std::move(run.report));
    }

    std::ostringstream csv;
    ntd::write_csv(csv, reports);
    write_text(out, csv.str());
    if (out != "-") {
      for (const auto& r : reports) {
        std::cerr << r.axis << '=' << r.value << "\tfrr=" << ntd::format_shortest(r.frr) << " ["
                  << ntd::format_shortest(r.frr_ci.lo) << ", " << ntd::format_shortest(r.frr_ci.hi)
                  << "]\tfar=" << ntd::format_shortest(r.far) << " [" << ntd::format_shortest(r.far_ci.lo) << ", "
                  << ntd::format_shortest(r.far_ci.hi) << "]\tthreshold=" << ntd::format_real17(r.threshold)
                  << (r.degenerate ? "\tdegenerate" : "") << '\n';
      }
    }
  }
};

// ---------------------------------------------------------------------------
// bench

struct BenchCmd {
  SyntheticOptions synth;
  ntd::BenchConfig cfg;
  std::string metric = "pearson";
  int delay_ms = 30;
  std::string out = "-";
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("bench", "Latency with and without the precomputed lookup table");
    synth.add(*app);
    app->add_option("--n-values", cfg.n_values, "Comparison set sizes")->delimiter(',')->capture_default_str();
    app->add_option("--queries", cfg.queries, "Queries per configuration")->capture_default_str();
    app->add_option("--delay-ms", delay_ms, "Stub extractor delay per invocation")->capture_default_str();
    app->add_option("--metric", metric, "Similarity metric")->capture_default_str();
    app->add_flag("!--no-lut-off", cfg.lut_off, "Skip the slow path without the lookup table");
    add_seed(*app, seed);
    app->add_option("--out", out, "CSV path, '-' for stdout")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    if (delay_ms < 0) throw Error(ErrorCode::kInvalidArgument, "--delay-ms must be non-negative");
    synth.spec.seed = seed;
    cfg.seed = seed;
    cfg.metric = ntd::parse_metric(metric);
    const ntd::SyntheticData data = ntd::generate_synthetic(synth.spec);
    if (data.heldout.empty()) throw Error(ErrorCode::kInvalidArgument, "bench needs held-out queries");

    std::vector<ntd::RawQuery> queries;
    for (std::size_t i = 0; i < cfg.queries; ++i) {
      const auto& lq = data.heldout[i % data.heldout.size()];
      queries.push_back(ntd::RawQuery{ntd::RawInput{lq.query.input_id, lq.query.embedding}, lq.query.predicted_class});
    }
    ntd::StubExtractor extractor{std::chrono::milliseconds(delay_ms)};
    const auto rows = ntd::bench_latency(data.store, queries, extractor, cfg);
    std::ostringstream csv;
    ntd::write_latency_csv(csv, rows);
    write_text(out, csv.str());
  }
};

// ---------------------------------------------------------------------------
// serve

struct ServeCmd {
  std::string listen = "127.0.0.1:0";
  std::string store;
  std::string thresholds;
  std::optional<std::size_t> n;
  std::optional<std::string> metric;
  std::string registry;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("serve", "Answer detection requests over TCP until SIGINT/SIGTERM");
    app->add_option("--listen", listen, "host:port (port 0 picks one)")->capture_default_str();
    app->add_option("--store", store, "Validation store (NTDF)")->required();
    app->add_option("--thresholds", thresholds, "Threshold file from calibrate")->required();
    app->add_option("--n", n, "Comparison set size (default: the calibrated n)");
    app->add_option("--metric", metric, "Similarity metric (default: the calibrated metric)");
    app->add_option("--register", registry, "Embedding lines served by embedding_ref");
    add_seed(*app, seed);
    app->callback([this] { run(); });
  }

  void run() {
    const auto [host, port] = ntd::parse_endpoint(listen);
    auto s = std::make_shared<const ntd::ValidationStore>(ntd::store_read(store));
    ntd::ThresholdTable table = ntd::ThresholdTable::load(thresholds);
    const std::size_t nn = n.value_or(table.n());
    const ntd::Metric m = metric ? ntd::parse_metric(*metric) : table.metric();
    auto detector = std::make_shared<const ntd::Detector>(s, std::move(table), nn, m);

    ntd::ServerOptions options;
    options.host = host;
    options.port = port;
    options.seed = seed;
    if (!registry.empty()) {
      auto in = open_input(registry);
      for (auto& [name, vec] : ntd::read_embedding_lines(in)) {
        if (!options.registry.emplace(name, std::move(vec)).second) {
          throw Error(ErrorCode::kParse, "duplicate embedding_ref '" + name + "'");
        }
      }
    }

    // Block the stop signals before any thread starts so only sigwait sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    ntd::GatewayServer server(detector, std::move(options));
    server.start();
    std::cout << "listening on " << host << ':' << server.port() << std::endl;
    int sig = 0;
    sigwait(&stop_signals, &sig);
    server.stop();
    std::cout << "stopped after " << server.requests_handled() << " requests" << std::endl;
  }
};

// ---------------------------------------------------------------------------
// query

struct QueryCmd {
  std::string connect;
  std::string queries = "-";

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("query", "Send a query batch to a running service");
    app->add_option("--connect", connect, "host:port of the service")->required();
    app->add_option("--queries", queries, "Query batch file, '-' for stdin")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    const auto [host, port] = ntd::parse_endpoint(connect);
    const std::vector<ntd::Query> batch = read_queries(queries);
    ntd::GatewayClient client(host, port);
    std::optional<Error> first_error;
    for (const auto& q : batch) {
      ntd::GatewayRequest req;
      req.input_id = q.input_id;
      req.predicted_class = q.predicted_class.value;
      req.embedding = std::vector<float>(q.embedding.values().begin(), q.embedding.values().end());
      const ntd::GatewayResponse r = client.call(req);
      if (!r.ok) {
        std::cerr << q.input_id << ": " << r.error_code << ": " << r.error << '\n';
        if (!first_error) first_error.emplace(ErrorCode::kInvalidArgument, r.error);
        continue;
      }
      ntd::Verdict v;
      v.decision = r.decision;
      v.score = r.score;
      v.threshold = r.threshold;
      std::cout << ntd::format_verdict_line(r.input_id, v) << '\n';
    }
    if (first_error) throw *first_error;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoor input detection via embedding similarity against validated class samples"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ntd 0.1.0");

  GenerateCmd generate;
  CalibrateCmd calibrate;
  DetectCmd detect;
  EvalCmd eval;
  BenchCmd bench;
  ServeCmd serve;
  QueryCmd query;
  generate.add(app);
  calibrate.add(app);
  detect.add(app);
  eval.add(app);
  bench.add(app);
  serve.add(app);
  query.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "ntd: " << ntd::to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == ErrorCode::kIo ? kExitIo : kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "ntd: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
