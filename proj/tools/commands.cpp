#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "privalign/errors.hpp"
#include "privalign/net.hpp"

namespace privalign::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// RFC-4180-ish line split: commas inside double quotes are literal, doubled
// quotes escape a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Sortable timestamp key. ISO-8601-style stamps are decomposed so that
// "2024-01-02T09:00" and "2024-01-02T09:00:00.5" order correctly; anything
// unparsable falls back to string order behind the parsed ones.
struct TimeKey {
  bool parsed = false;
  long long whole = 0;   // seconds assembled from date and time fields
  double fraction = 0;
  std::string raw;

  friend bool operator<(const TimeKey& a, const TimeKey& b) {
    if (a.parsed != b.parsed) return a.parsed;
    if (a.parsed) {
      if (a.whole != b.whole) return a.whole < b.whole;
      if (a.fraction != b.fraction) return a.fraction < b.fraction;
      return false;  // equal stamps stay in file order
    }
    return a.raw < b.raw;
  }
};

TimeKey parse_time(const std::string& text) {
  TimeKey key;
  key.raw = text;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0;
  int consumed = 0;
  int n = std::sscanf(text.c_str(), "%d-%d-%d%*1[T ]%d:%d:%lf%n", &y, &mo, &d, &h, &mi, &sec,
                      &consumed);
  if (n >= 5) {
    key.parsed = true;
    key.whole = (((static_cast<long long>(y) * 400 + mo) * 40 + d) * 30 + h) * 70 + mi;
    key.whole = key.whole * 70 + static_cast<long long>(sec);
    key.fraction = sec - static_cast<long long>(sec);
  }
  return key;
}

struct ReportTarget {
  std::ostream* os;
  std::ofstream file;

  explicit ReportTarget(const std::string& path) {
    if (path.empty() || path == "-") {
      os = &std::cout;
    } else {
      file.open(path);
      if (!file) throw InputError("cannot open output file: " + path);
      os = &file;
    }
  }
};

std::string format_moves(const fm::Alignment& alignment) {
  std::string out;
  for (const auto& mv : alignment.moves) {
    if (!out.empty()) out.push_back(' ');
    out += (mv.kind == fm::MoveKind::Sync ? "sync(" : "log(") + mv.label + ")";
  }
  if (out.empty()) out = "(empty trace)";
  return out;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

struct CommonArgs {
  std::string model;
  std::string index;
  std::string format = "auto";
  std::string log;
  std::string trace;
  std::size_t cap = model::kDefaultLinearizationCap;
};

fm::FmIndex resolve_index(const CommonArgs& args, const std::set<std::string>& extra) {
  if (!args.index.empty() && !args.model.empty())
    throw InputError("pass either --model or --index, not both");
  if (!args.index.empty()) return fm::load_index(args.index);
  if (!args.model.empty()) return index_from_model(args.model, args.format, args.cap, extra);
  throw InputError("one of --model or --index is required");
}

std::vector<TraceVariant> resolve_traces(const CommonArgs& args) {
  if (!args.log.empty() && !args.trace.empty())
    throw InputError("pass either --log or --trace, not both");
  if (!args.log.empty()) return read_csv_log(args.log);
  if (!args.trace.empty()) {
    TraceVariant v;
    v.activities = parse_trace_flag(args.trace);
    v.cases = {"trace"};
    return {v};
  }
  throw InputError("one of --log or --trace is required");
}

std::set<std::string> labels_of(const std::vector<TraceVariant>& variants) {
  std::set<std::string> out;
  for (const auto& v : variants) out.insert(v.activities.begin(), v.activities.end());
  return out;
}

int cmd_index_build(const CommonArgs& args, const std::string& out_path) {
  std::set<std::string> extra;
  if (!args.log.empty()) extra = labels_of(read_csv_log(args.log));
  fm::FmIndex index = index_from_model(args.model, args.format, args.cap, extra);
  fm::save_index(index, out_path);
  std::cout << "indexed " << index.text_len << " symbols, alphabet "
            << index.alphabet.size() << " (width " << index.alphabet.width << ") -> "
            << out_path << "\n";
  return 0;
}

int cmd_align(const CommonArgs& args, const std::string& budget_text,
              const std::string& out_path) {
  auto variants = resolve_traces(args);
  fm::FmIndex index = resolve_index(args, labels_of(variants));
  fm::Budget budget = parse_budget(budget_text);

  ReportTarget report(out_path);
  std::size_t total_cost = 0;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    fm::Alignment alignment = fm::align_with_log_moves(index, v.activities, budget);
    total_cost += alignment.cost;
    *report.os << "[variant " << i + 1 << "] cases=" << v.cases.size()
               << " len=" << v.activities.size() << " cost=" << alignment.cost
               << " moves: " << format_moves(alignment) << "\n";
  }
  *report.os << "aligned " << variants.size() << " variants, total cost " << total_cost
             << "\n";
  return 0;
}

int cmd_check(const std::string& addr, const CommonArgs& args, const std::string& backend,
              const std::string& out_path) {
  auto variants = resolve_traces(args);
  ReportTarget report(out_path);

  double total_ms = 0;
  std::size_t total_symbols = 0, total_cost = 0;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    net::ConnectOptions options;
    options.backend = backend;
    auto t0 = std::chrono::steady_clock::now();
    net::Connection conn = net::Connection::open(addr, options);
    fm::Alignment alignment = conn.check(v.activities);
    conn.close();
    auto t1 = std::chrono::steady_clock::now();

    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    const std::size_t symbols = v.activities.size() + 1;  // separator included
    total_ms += ms;
    total_symbols += symbols;
    total_cost += alignment.cost;
    *report.os << "[variant " << i + 1 << "] cases=" << v.cases.size()
               << " len=" << v.activities.size() << " cost=" << alignment.cost << " time="
               << ms << "ms per_symbol=" << ms / static_cast<double>(symbols)
               << "ms moves: " << format_moves(alignment) << "\n";
  }
  *report.os << "checked " << variants.size() << " variants, total cost " << total_cost
             << ", mean per-symbol "
             << (total_symbols ? total_ms / static_cast<double>(total_symbols) : 0.0)
             << "ms\n";
  return 0;
}

int cmd_serve(const CommonArgs& args, std::string addr, const std::string& budget_text,
              const std::string& backend, std::uint32_t max_frame) {
  std::set<std::string> extra;
  if (!args.log.empty()) extra = labels_of(read_csv_log(args.log));
  auto index = std::make_shared<const fm::FmIndex>(resolve_index(args, extra));

  if (const char* env = std::getenv("PRIVALIGN_LISTEN"); env && *env) addr = env;

  net::ServerOptions options;
  options.budget = parse_budget(budget_text);
  options.max_frame = max_frame;
  if (backend != "any") options.allowed_backend = backend;

  net::Server server(index, options);
  server.start(addr);
  std::cout << "serving " << index->text_len << " symbols on " << addr << " (port "
            << server.port() << ")\n"
            << std::flush;
  std::promise<void>().get_future().wait();  // until killed
  return 0;
}

int cmd_bench(const CommonArgs& args, const std::string& backends_text, std::size_t reps,
              const std::string& out_path) {
  auto variants = resolve_traces(args);
  auto index = std::make_shared<const fm::FmIndex>(resolve_index(args, labels_of(variants)));

  std::vector<std::string> backends;
  for (const auto& b : parse_trace_flag(backends_text)) backends.push_back(b);

  net::ServerOptions options;
  options.budget = fm::Budget::infinite();
  net::Server server(index, options);
  server.start("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());

  ReportTarget report(out_path);
  *report.os << "kind,backend,variant,rep,trace_len,cost,total_ms,per_symbol_ms\n";

  for (const auto& backend : backends) {
    std::vector<double> per_symbol;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto& trace = variants[vi].activities;
        net::ConnectOptions copts;
        copts.backend = backend;
        auto t0 = std::chrono::steady_clock::now();
        net::Connection conn = net::Connection::open(addr, copts);
        fm::Alignment alignment = conn.check(trace);
        conn.close();
        auto t1 = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        const double ps = ms / static_cast<double>(trace.size() + 1);
        per_symbol.push_back(ps);
        *report.os << "sample," << backend << "," << vi + 1 << "," << rep + 1 << ","
                   << trace.size() << "," << alignment.cost << "," << ms << "," << ps
                   << "\n";
      }
    }
    if (!per_symbol.empty()) {
      double mean = 0;
      for (double v : per_symbol) mean += v;
      mean /= static_cast<double>(per_symbol.size());
      double var = 0;
      for (double v : per_symbol) var += (v - mean) * (v - mean);
      var /= static_cast<double>(per_symbol.size());
      *report.os << "mean," << backend << ",,,,,," << mean << "\n";
      *report.os << "stddev," << backend << ",,,,,," << std::sqrt(var) << "\n";
    }
  }
  server.stop();
  return 0;
}

}  // namespace

std::vector<TraceVariant> read_csv_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open log: " + path);

  std::string line;
  if (!std::getline(is, line)) throw InputError("log is empty: " + path);
  auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return i;
    throw InputError("log header has no '" + name + "' column: " + path);
  };
  const std::size_t case_col = column("case_id");
  const std::size_t act_col = column("activity");
  const std::size_t time_col = column("timestamp");

  struct Row {
    std::string activity;
    TimeKey time;
  };
  std::map<std::string, std::vector<Row>> by_case;
  std::vector<std::string> case_order;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    const std::size_t needed = std::max({case_col, act_col, time_col}) + 1;
    if (fields.size() < needed)
      throw InputError("log line " + std::to_string(lineno) + " has too few fields");
    std::string case_id = trim(fields[case_col]);
    std::string activity = trim(fields[act_col]);
    if (case_id.empty() || activity.empty())
      throw InputError("log line " + std::to_string(lineno) + " has an empty field");
    auto [it, fresh] = by_case.try_emplace(case_id);
    if (fresh) case_order.push_back(case_id);
    it->second.push_back({std::move(activity), parse_time(trim(fields[time_col]))});
  }

  std::vector<TraceVariant> variants;
  std::map<std::vector<std::string>, std::size_t> variant_index;
  for (const auto& case_id : case_order) {
    auto& rows = by_case[case_id];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    std::vector<std::string> activities;
    for (auto& r : rows) activities.push_back(r.activity);
    auto [it, fresh] = variant_index.try_emplace(activities, variants.size());
    if (fresh) variants.push_back({std::move(activities), {}});
    variants[it->second].cases.push_back(case_id);
  }
  return variants;
}

std::vector<std::string> parse_trace_flag(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

fm::Budget parse_budget(const std::string& text) {
  if (text == "inf" || text == "unlimited") return fm::Budget::infinite();
  try {
    std::size_t used = 0;
    unsigned long v = std::stoul(text, &used);
    if (used != text.size() || v > 0xfffffffeUL) throw InputError("");
    return fm::Budget::limited(static_cast<std::uint32_t>(v));
  } catch (...) {
    throw InputError("budget must be a count or 'inf', got: " + text);
  }
}

model::PetriNet load_model_file(const std::string& path, const std::string& format) {
  std::string text = read_file(path);
  model::ModelFormat fmt;
  if (format == "json") {
    fmt = model::ModelFormat::Json;
  } else if (format == "pnml") {
    fmt = model::ModelFormat::Pnml;
  } else if (format == "auto") {
    if (path.ends_with(".json")) {
      fmt = model::ModelFormat::Json;
    } else if (path.ends_with(".pnml") || path.ends_with(".xml")) {
      fmt = model::ModelFormat::Pnml;
    } else {
      auto first = text.find_first_not_of(" \t\r\n");
      fmt = (first != std::string::npos && text[first] == '<') ? model::ModelFormat::Pnml
                                                               : model::ModelFormat::Json;
    }
  } else {
    throw InputError("format must be json, pnml or auto, got: " + format);
  }
  return model::parse_model(text, fmt);
}

fm::FmIndex index_from_model(const std::string& path, const std::string& format,
                             std::size_t cap, const std::set<std::string>& extra_labels) {
  model::PetriNet net = load_model_file(path, format);
  model::Unfolding prefix = model::unfold(net);
  std::vector<std::vector<std::string>> sequences;
  for (const auto& run : model::complete_runs(net, prefix)) {
    auto exts = model::linear_extensions(run, cap);
    sequences.insert(sequences.end(), exts.begin(), exts.end());
  }
  model::Alphabet alphabet = model::relabel(model::visible_labels(net), extra_labels);
  model::RunsText text = model::concatenate(sequences, alphabet);
  return fm::build_index(text, alphabet);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"conformance checking against an indexed process model"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string out_path;
  std::string serve_addr = "127.0.0.1:7001", check_addr;
  std::string serve_budget = "16", align_budget = "inf";
  std::string serve_backend = "any", check_backend = "group";
  std::string bench_backends = "mock,group";
  std::uint32_t max_frame = net::kDefaultMaxFrame;
  std::size_t reps = 3;

  auto add_model_flags = [&](CLI::App* cmd, bool with_index) {
    cmd->add_option("--model", args.model, "model file (JSON or PNML)");
    if (with_index) cmd->add_option("--index", args.index, "prebuilt index file");
    cmd->add_option("--format", args.format, "model format: json, pnml or auto");
    cmd->add_option("--cap", args.cap, "linearization ceiling per run");
  };
  auto add_trace_flags = [&](CLI::App* cmd) {
    cmd->add_option("--log", args.log, "CSV event log (case_id,activity,timestamp)");
    cmd->add_option("--trace", args.trace, "inline trace, comma-separated activities");
  };

  CLI::App* index_cmd = app.add_subcommand("index", "index maintenance");
  index_cmd->require_subcommand(1);
  CLI::App* build = index_cmd->add_subcommand("build", "build an index from a model");
  add_model_flags(build, false);
  build->get_option("--model")->required();
  build->add_option("--log", args.log, "CSV log whose activities widen the alphabet");
  build->add_option("--out", out_path, "index output file")->required();
  std::function<int()> action;
  build->callback([&] { action = [&] { return cmd_index_build(args, out_path); }; });

  CLI::App* serve = app.add_subcommand("serve", "serve an index to remote clients");
  add_model_flags(serve, true);
  serve->add_option("--log", args.log, "CSV log whose activities widen the alphabet");
  serve->add_option("--addr", serve_addr, "listen address host:port")->capture_default_str();
  serve->add_option("--budget", serve_budget, "mismatch budget per session, count or 'inf'")
      ->capture_default_str();
  serve->add_option("--backend", serve_backend, "accepted backend: mock, group or any")
      ->capture_default_str();
  serve->add_option("--max-frame", max_frame, "frame size limit in bytes")
      ->capture_default_str();
  serve->callback([&] {
    action = [&] { return cmd_serve(args, serve_addr, serve_budget, serve_backend, max_frame); };
  });

  CLI::App* check = app.add_subcommand("check", "run traces against a remote session");
  add_trace_flags(check);
  check->add_option("--addr", check_addr, "server address host:port")->required();
  check->add_option("--backend", check_backend, "encryption backend: mock or group")
      ->capture_default_str();
  check->add_option("--out", out_path, "report output file, '-' for stdout");
  check->callback(
      [&] { action = [&] { return cmd_check(check_addr, args, check_backend, out_path); }; });

  CLI::App* align = app.add_subcommand("align", "align traces locally, no encryption");
  add_model_flags(align, true);
  add_trace_flags(align);
  align->add_option("--budget", align_budget, "mismatch budget, count or 'inf'")
      ->capture_default_str();
  align->add_option("--out", out_path, "report output file, '-' for stdout");
  align->callback([&] { action = [&] { return cmd_align(args, align_budget, out_path); }; });

  CLI::App* bench = app.add_subcommand("bench", "time secure checks over loopback");
  add_model_flags(bench, true);
  add_trace_flags(bench);
  bench->add_option("--backend", bench_backends, "comma-separated backends to time")
      ->capture_default_str();
  bench->add_option("--reps", reps, "repetitions per variant")->capture_default_str();
  bench->add_option("--out", out_path, "CSV output file, '-' for stdout");
  bench->callback(
      [&] { action = [&] { return cmd_bench(args, bench_backends, reps, out_path); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    return action ? action() : 2;
  } catch (const BudgetExhaustedError& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 3;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 3;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace privalign::cli
