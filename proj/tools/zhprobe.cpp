// Copyright 2026 The zhprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// zhprobe: build probing datasets from error-correction pairs, generate
// masked pre-training corpora, and score masked language models through the
// probe protocol.

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "zhprobe/zhprobe.hpp"

namespace fs = std::filesystem;
using namespace zhprobe;

namespace {

void note(const std::string& msg) { std::cerr << "zhprobe: " << msg << '\n'; }

/// "-" means stdin.
class Input {
 public:
  explicit Input(const std::string& path) {
    if (path == "-") {
      stream_ = &std::cin;
      return;
    }
    file_.open(path, std::ios::binary);
    if (!file_) throw Error("cannot open " + path + ": " + std::strerror(errno));
    stream_ = &file_;
  }
  std::istream& get() { return *stream_; }

 private:
  std::ifstream file_;
  std::istream* stream_ = nullptr;
};

/// "-" means stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path == "-") {
      stream_ = &std::cout;
      return;
    }
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw Error("cannot write " + path + ": " + std::strerror(errno));
    stream_ = &file_;
  }
  std::ostream& get() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw Error("write failed");
  }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

fs::path ensure_dir(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

std::vector<ProbingInstance> load_instances(const std::string& path) {
  Input in(path);
  return read_instances(in.get());
}

Vocab load_vocab(const std::string& path) {
  Input in(path);
  return Vocab::load(in.get());
}

// ---------------------------------------------------------------------------
// align

struct AlignArgs {
  std::vector<std::string> pair;
  std::string input;
};

nlohmann::ordered_json spans_json(const std::vector<SpanEdit>& spans) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : spans) {
    arr.push_back({{"type", span_type_name(s.type)},
                   {"src_start", s.src_start},
                   {"tgt_start", s.tgt_start},
                   {"src", to_utf8(s.src_chars)},
                   {"tgt", to_utf8(s.tgt_chars)}});
  }
  return arr;
}

int run_align(const AlignArgs& a) {
  if (!a.pair.empty()) {
    if (a.pair.size() != 2) throw CLI::ValidationError("align", "expects ERRONEOUS CORRECTED");
    const auto src = decode_sentence(a.pair[0]);
    const auto tgt = decode_sentence(a.pair[1]);
    std::cout << spans_json(align_pair(src, tgt)).dump() << '\n';
    return 0;
  }
  Input in(a.input);
  const auto parsed = parse_pairs(in.get());
  for (const auto& r : parsed.rejects) note("line " + std::to_string(r.line) + ": " + r.reason);
  for (const auto& p : parsed.pairs) {
    nlohmann::ordered_json j{{"id", p.id}, {"spans", spans_json(align_pair(p.erroneous, p.corrected))}};
    std::cout << j.dump() << '\n';
  }
  return parsed.rejects.empty() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// build-dataset

struct BuildArgs {
  std::string input;
  std::string out_dir = ".";
  bool apply_other_edits = false;
};

int run_build(const BuildArgs& a) {
  Input in(a.input);
  const auto parsed = parse_pairs(in.get());
  BuildOptions opts;
  opts.apply_other_edits = a.apply_other_edits;
  BuildResult result = build_instances(parsed.pairs, opts);
  for (const auto& r : parsed.rejects) {
    result.rejects.add(r.pair_id.empty() ? "line:" + std::to_string(r.line) : r.pair_id,
                       "malformed-record");
    note("line " + std::to_string(r.line) + ": " + r.reason);
  }
  for (const auto& [id, msg] : result.errors) note(id + ": " + msg);

  const auto dir = ensure_dir(a.out_dir);
  {
    Output out((dir / "instances.jsonl").string());
    write_instances(out.get(), result.instances);
    out.close();
  }
  {
    Output out((dir / "stats.tsv").string());
    write_stats_tsv(out.get(), result.stats);
    out.close();
  }
  {
    Output out((dir / "rejects.tsv").string());
    result.rejects.write_tsv(out.get());
    out.close();
  }
  note(std::to_string(parsed.pairs.size()) + " pairs, " + std::to_string(result.spans_found) +
       " span edits, " + std::to_string(result.instances.size()) + " instances, " +
       std::to_string(parsed.rejects.size()) + " malformed records");
  return 0;
}

// ---------------------------------------------------------------------------
// segment

struct SegmentArgs {
  std::string input = "-";
  std::string lexicon;
};

int run_segment(const SegmentArgs& a) {
  Lexicon lex;
  if (!a.lexicon.empty()) {
    Input lin(a.lexicon);
    lex = Lexicon::load(lin.get());
  }
  Input in(a.input);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in.get(), line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      std::cout << '\n';
      continue;
    }
    std::u32string chars;
    try {
      chars = decode_utf8(line);
    } catch (const DecodeError& e) {
      throw RecordError(lineno, e.what());
    }
    std::cout << format_segmented(chars, segment_fmm(chars, lex)) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// mask

struct MaskArgs {
  std::string input = "-";
  std::string output = "-";
  std::string strategy = "clm";
  std::uint64_t seed = 0;
  double mask_rate = 0.15;
  std::size_t max_seq_len = 512;
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;
  std::string lexicon;
  bool presegmented = false;
  std::string vocab;
  std::string write_vocab;
  std::size_t workers = 1;
};

int run_mask(const MaskArgs& a) {
  MaskingConfig cfg;
  cfg.strategy = parse_strategy(a.strategy);
  cfg.seed = a.seed;
  cfg.mask_rate = a.mask_rate;
  cfg.max_seq_len = a.max_seq_len;
  cfg.p_mask = a.p_mask;
  cfg.p_random = a.p_random;
  cfg.p_keep = a.p_keep;
  cfg.validate();

  Lexicon lex;
  CorpusOptions opts;
  opts.workers = a.workers;
  if (a.presegmented) {
    opts.segmentation = SegmentationSource::Presegmented;
  } else if (!a.lexicon.empty()) {
    Input lin(a.lexicon);
    lex = Lexicon::load(lin.get());
    opts.segmentation = SegmentationSource::Lexicon;
    opts.lexicon = &lex;
  }

  // Without a vocabulary file the random-replacement pool is the corpus's own
  // character inventory, which needs a first pass over the input.
  std::string buffered;
  std::unique_ptr<std::istream> second_pass;
  Vocab vocab;
  if (!a.vocab.empty()) {
    vocab = load_vocab(a.vocab);
  } else {
    std::set<char32_t> seen;
    Input first(a.input);
    std::string line;
    std::ostringstream copy;
    while (std::getline(first.get(), line)) {
      if (a.input == "-") copy << line << '\n';
      for (char32_t c : decode_utf8(line)) {
        if (c != U'\r' && !(a.presegmented && c == U' ')) seen.insert(c);
      }
    }
    vocab = Vocab::from_characters(seen);
    if (a.input == "-") second_pass = std::make_unique<std::istringstream>(copy.str());
  }
  if (!a.write_vocab.empty()) {
    Output vout(a.write_vocab);
    vocab.save(vout.get());
    vout.close();
  }

  Output out(a.output);
  CorpusSummary s;
  if (second_pass) {
    s = generate_corpus(*second_pass, out.get(), cfg, opts, vocab.characters());
  } else {
    Input in(a.input);
    s = generate_corpus(in.get(), out.get(), cfg, opts, vocab.characters());
  }
  out.close();
  note(std::to_string(s.lines) + " lines, " + std::to_string(s.pieces) + " sequences (" +
       std::to_string(s.clm) + " clm, " + std::to_string(s.wwm) + " wwm), " +
       std::to_string(s.split_lines) + " split, " + std::to_string(s.skipped_empty) + " empty");
  return 0;
}

// ---------------------------------------------------------------------------
// Backends shared by probe and serve

struct BackendArgs {
  std::string kind;
  std::string model;
  std::string instances;
  std::string vocab;
  std::uint64_t seed = 0;
  std::size_t inventory_size = 5000;
};

std::unique_ptr<Backend> make_backend(const BackendArgs& a,
                                      const std::vector<ProbingInstance>* instances) {
  if (a.kind == "oracle") {
    if (instances) return std::make_unique<OracleBackend>(*instances);
    if (a.instances.empty()) throw CLI::ValidationError("--backend oracle", "needs --instances");
    return std::make_unique<OracleBackend>(load_instances(a.instances));
  }
  if (a.kind == "random") {
    auto inventory = a.vocab.empty() ? UniformRandomBackend::cjk_inventory(a.inventory_size)
                                     : load_vocab(a.vocab).characters();
    return std::make_unique<UniformRandomBackend>(std::move(inventory), a.seed);
  }
  if (a.kind == "ngram") {
    if (a.model.empty()) throw CLI::ValidationError("--backend ngram", "needs --model");
    Input in(a.model);
    return std::make_unique<NgramPredictor>(NgramPredictor::load(in.get()));
  }
  throw CLI::ValidationError("--backend", "unknown backend '" + a.kind + "'");
}

// ---------------------------------------------------------------------------
// probe

struct ProbeArgs {
  std::string instances;
  std::string out_dir = ".";
  std::string bridge;
  BackendArgs backend;
  std::size_t k = 10;
  std::size_t max_seq_len = 512;
  std::size_t in_flight = 64;
  double timeout_s = 30.0;
  std::string vocab;
  bool per_span = false;
  std::string label = "model";
};

int run_probe_cmd(const ProbeArgs& a) {
  const auto instances = load_instances(a.instances);
  std::unique_ptr<Backend> backend;
  std::unique_ptr<QueryExecutor> executor;
  BridgeClient* bridge = nullptr;
  if (!a.backend.kind.empty()) {
    backend = make_backend(a.backend, &instances);
    executor = std::make_unique<LocalExecutor>(*backend);
  } else if (!a.bridge.empty()) {
    BridgeOptions bo;
    bo.max_in_flight = a.in_flight;
    bo.timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000.0));
    auto client = std::make_unique<BridgeClient>(open_endpoint(a.bridge), bo);
    bridge = client.get();
    executor = std::move(client);
  } else {
    throw CLI::ValidationError("probe", "no model: pass --bridge, set ZHPROBE_BRIDGE, or use --backend");
  }

  std::optional<Vocab> vocab;
  if (!a.vocab.empty()) vocab = load_vocab(a.vocab);
  ProbeOptions opts;
  opts.top_k = a.k;
  opts.max_seq_len = a.max_seq_len;
  opts.vocab = vocab ? &*vocab : nullptr;
  opts.keep_predictions = true;
  const ProbeRun run = run_probe(instances, *executor, opts);
  const MetricTable table =
      a.per_span ? aggregate(run.records, Granularity::PerSpan) : run.table;

  const auto dir = ensure_dir(a.out_dir);
  {
    Output out((dir / "records.jsonl").string());
    for (const auto& r : run.records) out.get() << record_to_json(r).dump() << '\n';
    out.close();
  }
  {
    Output out((dir / "predictions.jsonl").string());
    for (const auto& p : run.predictions) {
      auto top = nlohmann::ordered_json::array();
      for (const auto& c : p.top) top.push_back({c.token, c.score});
      nlohmann::ordered_json j{{"id", p.instance_id}, {"ordinal", p.ordinal}, {"gold", p.gold}, {"top", top}};
      out.get() << j.dump() << '\n';
    }
    out.close();
  }
  {
    Output out((dir / "table.tsv").string());
    write_table_tsv(out.get(), table);
    out.close();
  }
  {
    Output out((dir / "table.txt").string());
    write_table_text(out.get(), {{a.label, table}});
    out.close();
  }
  {
    Output out((dir / "errors.tsv").string());
    out.get() << "id\tkind\tmessage\n";
    for (const auto& [id, why] : run.skipped) out.get() << id << "\tskipped\t" << why << '\n';
    for (const auto& [id, why] : run.errors) out.get() << id << "\terror\t" << why << '\n';
    out.close();
  }
  nlohmann::ordered_json summary{{"instances", instances.size()},
                                 {"scored_positions", run.records.size()},
                                 {"skipped", run.skipped.size()},
                                 {"errors", run.errors.size()},
                                 {"granularity", a.per_span ? "span" : "position"}};
  if (bridge) {
    const auto& s = bridge->stats();
    summary["bridge"] = {{"sent", s.sent},
                         {"responses", s.responses},
                         {"protocol_errors", s.protocol_errors},
                         {"timeouts", s.timeouts},
                         {"stray_lines", s.stray_lines}};
  }
  {
    Output out((dir / "summary.json").string());
    out.get() << summary.dump(2) << '\n';
    out.close();
  }
  write_table_text(std::cout, {{a.label, table}});
  note(std::to_string(run.records.size()) + " positions scored, " +
       std::to_string(run.skipped.size()) + " skipped, " + std::to_string(run.errors.size()) +
       " protocol errors");
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<std::string> records;
  std::string out_dir = ".";
  bool per_span = false;
};

int run_report(const ReportArgs& a) {
  std::vector<std::pair<std::string, MetricTable>> tables;
  for (const auto& spec : a.records) {
    const auto eq = spec.find('=');
    std::string label, path;
    if (eq == std::string::npos) {
      path = spec;
      label = fs::path(spec).parent_path().filename().string();
      if (label.empty()) label = fs::path(spec).stem().string();
    } else {
      label = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    }
    Input in(path);
    const auto recs = read_records(in.get());
    tables.emplace_back(label, aggregate(recs, a.per_span ? Granularity::PerSpan : Granularity::PerPosition));
  }
  const auto rows = curve_series(tables);  // also rejects duplicate labels
  const auto dir = ensure_dir(a.out_dir);
  {
    Output out((dir / "table.tsv").string());
    out.get() << "label\ttask\tbucket\tp@1\tp@10\tn\n";
    for (const auto& [label, t] : tables) {
      std::ostringstream one;
      write_table_tsv(one, t);
      std::istringstream lines(one.str());
      std::string line;
      std::getline(lines, line);  // header
      while (std::getline(lines, line)) out.get() << label << '\t' << line << '\n';
    }
    out.close();
  }
  {
    Output out((dir / "table.txt").string());
    write_table_text(out.get(), tables);
    out.close();
  }
  {
    Output out((dir / "curve.csv").string());
    write_curve_csv(out.get(), rows);
    out.close();
  }
  const auto degraded = degraded_series(rows);
  {
    Output out((dir / "degraded.tsv").string());
    out.get() << "task\tbucket\tmetric\n";
    for (const auto& k : degraded) {
      out.get() << task_name(k.task) << '\t' << k.bucket << '\t' << metric_name(k.metric) << '\n';
    }
    out.close();
  }
  write_table_text(std::cout, tables);
  if (tables.size() > 1) {
    note(std::to_string(degraded.size()) + " series end below their first value (see degraded.tsv)");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
  BackendArgs backend;
  std::string listen;
  std::size_t max_connections = 0;
};

int run_serve(const ServeArgs& a) {
  const auto backend = make_backend(a.backend, nullptr);
  if (a.listen.empty()) {
    serve_fd(STDIN_FILENO, STDOUT_FILENO, *backend);
    return 0;
  }
  const auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--listen", "expects host:port");
  const std::string host = a.listen.substr(0, colon);
  const int port = std::stoi(a.listen.substr(colon + 1));
  if (port < 0 || port > 65535) throw CLI::ValidationError("--listen", "port out of range");
  TcpServer server(host, static_cast<unsigned short>(port));
  std::cerr << "zhprobe: listening on " << host << ':' << server.port() << std::endl;
  server.serve(*backend, a.max_connections);
  return 0;
}

// ---------------------------------------------------------------------------
// train-ngram

struct TrainArgs {
  std::string input = "-";
  std::string output = "-";
  int order = 2;
};

int run_train(const TrainArgs& a) {
  Input in(a.input);
  const auto model = NgramPredictor::train(in.get(), a.order);
  Output out(a.output);
  model.save(out.get());
  out.close();
  note("trained order-" + std::to_string(a.order) + " model over " +
       std::to_string(model.vocabulary().size()) + " characters");
  return 0;
}

void add_backend_options(CLI::App* cmd, BackendArgs& b, bool required) {
  auto* opt = cmd->add_option("--backend", b.kind, "In-process model: oracle, random or ngram")
                  ->check(CLI::IsMember({"oracle", "random", "ngram"}));
  if (required) opt->required();
  cmd->add_option("--model", b.model, "n-gram model file (ngram backend)");
  cmd->add_option("--seed", b.seed, "Seed for the random backend");
  cmd->add_option("--inventory-size", b.inventory_size,
                  "Random backend draws from this many CJK ideographs from U+4E00")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--backend-vocab", b.vocab, "Random backend draws from this vocabulary instead");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe Chinese masked language models on grammatical-error spans."};
  app.set_config("--config", "", "TOML/INI file with default option values, one [section] per subcommand");
  app.require_subcommand(1);
  app.set_version_flag("--version", "zhprobe 0.1.0");

  AlignArgs align;
  auto* c_align = app.add_subcommand("align", "Print span edits between erroneous and corrected text");
  c_align->add_option("pair", align.pair, "ERRONEOUS CORRECTED")->expected(0, 2);
  c_align->add_option("-i,--input", align.input, "TSV of id, erroneous, corrected");
  c_align->callback([&] {
    if (align.pair.empty() && align.input.empty()) {
      throw CLI::ValidationError("align", "give a sentence pair or --input");
    }
  });

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-dataset", "Derive probing instances from a pair TSV");
  c_build->add_option("-i,--input", build.input, "TSV of id, erroneous, corrected")->required();
  c_build->add_option("-o,--out-dir", build.out_dir, "Directory for instances.jsonl, stats.tsv, rejects.tsv");
  c_build->add_flag("--apply-other-edits", build.apply_other_edits,
                    "Correct every other edit of the pair in the probing sentence");

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "Forward maximum matching word segmentation");
  c_seg->add_option("-i,--input", seg.input, "One sentence per line ('-' for stdin)");
  c_seg->add_option("-l,--lexicon", seg.lexicon, "One word per line");

  MaskArgs mask;
  auto* c_mask = app.add_subcommand("mask", "Generate a masked pre-training corpus");
  c_mask->add_option("-i,--input", mask.input, "One sentence per line ('-' for stdin)");
  c_mask->add_option("-o,--output", mask.output, "JSON lines output ('-' for stdout)");
  c_mask->add_option("--strategy", mask.strategy, "clm, wwm or mixed")
      ->check(CLI::IsMember({"clm", "wwm", "mixed"}));
  c_mask->add_option("--seed", mask.seed);
  c_mask->add_option("--mask-rate", mask.mask_rate);
  c_mask->add_option("--max-seq-len", mask.max_seq_len, "Including CLS and SEP");
  c_mask->add_option("--p-mask", mask.p_mask);
  c_mask->add_option("--p-random", mask.p_random);
  c_mask->add_option("--p-keep", mask.p_keep);
  auto* lex_opt = c_mask->add_option("-l,--lexicon", mask.lexicon, "Segment with this lexicon");
  c_mask->add_flag("--presegmented", mask.presegmented, "Input words are separated by single spaces")
      ->excludes(lex_opt);
  c_mask->add_option("--vocab", mask.vocab, "Vocabulary supplying random replacements");
  c_mask->add_option("--write-vocab", mask.write_vocab, "Write the vocabulary in use");
  c_mask->add_option("-j,--workers", mask.workers)->check(CLI::PositiveNumber);

  ProbeArgs probe;
  auto* c_probe = app.add_subcommand("probe", "Score a model on probing instances");
  c_probe->add_option("-i,--instances", probe.instances, "instances.jsonl from build-dataset")->required();
  c_probe->add_option("-o,--out-dir", probe.out_dir);
  c_probe->add_option("-b,--bridge", probe.bridge, "Backend command line, or host:port")
      ->envname("ZHPROBE_BRIDGE");
  add_backend_options(c_probe, probe.backend, false);
  c_probe->add_option("-k,--top-k", probe.k, "Candidates requested per position")->check(CLI::PositiveNumber);
  c_probe->add_option("--max-seq-len", probe.max_seq_len);
  c_probe->add_option("--in-flight", probe.in_flight, "Pipelined queries")->check(CLI::PositiveNumber);
  c_probe->add_option("--timeout", probe.timeout_s, "Seconds per query")->check(CLI::PositiveNumber);
  c_probe->add_option("--vocab", probe.vocab, "Send characters outside this vocabulary as [UNK]");
  c_probe->add_flag("--per-span", probe.per_span, "Count a span as a hit only if every position is");
  c_probe->add_option("--label", probe.label, "Row label in table.txt");

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Tables and curves from one or more record files");
  c_report->add_option("records", report.records, "[LABEL=]records.jsonl, in checkpoint order")->required();
  c_report->add_option("-o,--out-dir", report.out_dir);
  c_report->add_flag("--per-span", report.per_span);

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Answer probe queries on stdin/stdout or TCP");
  add_backend_options(c_serve, serve.backend, true);
  c_serve->add_option("--instances", serve.backend.instances, "Gold instances (oracle backend)");
  c_serve->add_option("--listen", serve.listen, "host:port to listen on (port 0 picks one)");
  c_serve->add_option("--max-connections", serve.max_connections, "Exit after this many (0 = never)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train-ngram", "Train the reference n-gram predictor");
  c_train->add_option("-i,--input", train.input, "One sentence per line ('-' for stdin)");
  c_train->add_option("-o,--output", train.output);
  c_train->add_option("--order", train.order)->check(CLI::IsMember({2, 3}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_align) return run_align(align);
    if (*c_build) return run_build(build);
    if (*c_seg) return run_segment(seg);
    if (*c_mask) return run_mask(mask);
    if (*c_probe) return run_probe_cmd(probe);
    if (*c_report) return run_report(report);
    if (*c_serve) return run_serve(serve);
    if (*c_train) return run_train(train);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    note(e.what());
    return 1;
  }
  return 0;
}
