#include "wsym/cli.hpp"

#include <CLI11.hpp>

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "wsym/metanet.hpp"
#include "wsym/propverify.hpp"
#include "wsym/zoogen.hpp"

namespace wsym {

namespace fs = std::filesystem;

namespace {

// Input problems detected after flag parsing; they map to the usage exit code.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string git_describe() {
  std::string out;
  if (FILE* p = popen("git describe --always --dirty 2>/dev/null", "r")) {
    std::array<char, 128> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) out += buf.data();
    pclose(p);
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv(kOutDirEnv); dir && *dir) p = fs::path(dir) / p;
  }
  return p;
}

fs::path require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("no such file: " + path);
  return path;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Written before work begins, rewritten with the end timestamp on success.
class ManifestWriter {
 public:
  ManifestWriter(fs::path path, RunManifest m) : path_(std::move(path)), m_(std::move(m)) {
    m_.started = utc_now();
    m_.git_describe = git_describe();
    flush();
  }
  void finish() {
    m_.finished = utc_now();
    flush();
  }

 private:
  void flush() const {
    ensure_parent(path_);
    write_file(path_, dump_json(manifest_to_json(m_), 2) + "\n");
  }
  fs::path path_;
  RunManifest m_;
};

std::string hash_json(const json& j) { return hex64(fnv1a64(dump_json(j))); }

// --- zoo ----------------------------------------------------------------------

struct ZooGenFlags {
  std::size_t n = 200;
  std::string task, arch = "mlp", out;
  std::uint64_t seed = 0;
};

int cmd_zoo_gen(const ZooGenFlags& f, const std::string& command, std::ostream& out) {
  const Arch arch = parse_arch(f.arch);
  if (arch == Arch::kConv1d) throw UsageError("zoo gen supports --arch mlp or mha");
  const fs::path path = resolve_out(f.out);
  const fs::path csv = path.string() + ".csv";
  json opts{{"command", "zoo gen"}, {"n", f.n}, {"task", f.task}, {"arch", f.arch}};
  ManifestWriter manifest(path.string() + ".run.json",
                          {command, hash_json(opts), f.seed, "", "", "", {path.string(), csv.string()}});
  Zoo zoo;
  if (arch == Arch::kMlp) {
    MlpZooOptions o;
    o.n = f.n;
    if (!f.task.empty()) o.task = f.task;
    zoo = gen_mlp_zoo(o, f.seed);
  } else {
    MhaZooOptions o;
    o.n = f.n;
    if (!f.task.empty()) o.task = f.task;
    zoo = gen_mha_zoo(o, f.seed);
  }
  ensure_parent(path);
  save_zoo(zoo, path);
  write_file(csv, zoo_manifest_csv(zoo));
  manifest.finish();
  out << "wrote " << zoo.entries.size() << " entries to " << path.string() << "\n";
  return kExitOk;
}

struct ZooAugmentFlags {
  std::string in, out;
  AugmentOptions opts;
  std::uint64_t seed = 0;
};

int cmd_zoo_augment(const ZooAugmentFlags& f, const std::string& command, std::ostream& out) {
  const Zoo zoo = load_zoo(require_file(f.in));
  const fs::path path = resolve_out(f.out);
  const fs::path csv = path.string() + ".csv";
  json opts{{"command", "zoo augment"},   {"input", hex64(fnv1a64(read_file(f.in)))},
            {"factor", f.opts.factor},    {"scale_exp", f.opts.scale_exp},
            {"gl_spread", f.opts.gl_spread}, {"permute", f.opts.permute}};
  ManifestWriter manifest(path.string() + ".run.json",
                          {command, hash_json(opts), f.seed, "", "", "", {path.string(), csv.string()}});
  const Zoo aug = augment_zoo(zoo, f.opts, f.seed);
  ensure_parent(path);
  save_zoo(aug, path);
  write_file(csv, zoo_manifest_csv(aug));
  manifest.finish();
  out << "wrote " << aug.entries.size() << " entries to " << path.string() << "\n";
  return kExitOk;
}

// --- train / eval -------------------------------------------------------------

constexpr std::array<Split, 3> kSplits{Split::kTrain, Split::kVal, Split::kTest};

std::string metrics_row(std::uint64_t seed, Split split, const EvalMetrics& m) {
  return std::to_string(seed) + "," + split_name(split) + "," + fmt(m.tau) + "," + fmt(m.loss) + "," +
         std::to_string(m.n) + "\n";
}

struct TrainFlags {
  std::string zoo, config, preset = "desk", out;
  std::vector<std::uint64_t> seeds{0};
  std::string quasi;
  std::optional<std::size_t> epochs;
  std::size_t jobs = 1;
};

MetanetConfig resolve_config(const TrainFlags& f) {
  MetanetConfig base = f.preset == "paper" ? MetanetConfig::paper() : MetanetConfig::desk();
  MetanetConfig c = f.config.empty() ? base : config_from_json(parse_json(read_file(require_file(f.config))), base);
  if (!f.quasi.empty()) c.quasi = f.quasi == "on";
  if (f.epochs) c.epochs = *f.epochs;
  return c;
}

int cmd_train(const TrainFlags& f, const std::string& command, std::ostream& out) {
  const Zoo zoo = load_zoo(require_file(f.zoo));
  MetanetConfig base = resolve_config(f);
  base.arch = zoo.arch;
  base.validate();
  if (zoo.entries.empty()) throw UsageError("zoo is empty");

  const fs::path dir = resolve_out(f.out);
  std::vector<std::string> outputs{(dir / "metrics.csv").string(), (dir / "history.csv").string()};
  for (auto s : f.seeds) outputs.push_back((dir / ("model-s" + std::to_string(s) + ".json")).string());
  MetanetConfig hashed = base;
  hashed.seed = 0;
  ManifestWriter manifest(dir / "run.json",
                          {command, config_hash(hashed), f.seeds.front(), "", "", "", outputs});

  struct Result {
    Metanet model;
    std::array<EvalMetrics, 3> metrics;
  };
  std::vector<std::optional<Result>> results(f.seeds.size());
  std::vector<std::string> errors(f.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < f.seeds.size(); i = next++) {
      try {
        MetanetConfig c = base;
        c.seed = f.seeds[i];
        Metanet model = build(c, zoo.entries.front().params);
        train(model, zoo);
        Result r{std::move(model), {}};
        for (std::size_t s = 0; s < kSplits.size(); ++s) {
          const auto entries = select(zoo, kSplits[s]);
          if (!entries.empty()) r.metrics[s] = evaluate(r.model, entries);
        }
        results[i] = std::move(r);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(f.jobs, f.seeds.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("seed " + std::to_string(f.seeds[i]) + ": " + errors[i]);
  }

  fs::create_directories(dir);
  std::string metrics = "seed,split,tau,loss,n\n", history = "seed,epoch,loss\n";
  for (std::size_t i = 0; i < f.seeds.size(); ++i) {
    const auto& r = *results[i];
    for (std::size_t s = 0; s < kSplits.size(); ++s) metrics += metrics_row(f.seeds[i], kSplits[s], r.metrics[s]);
    for (std::size_t e = 0; e < r.model.history.size(); ++e) {
      history += std::to_string(f.seeds[i]) + "," + std::to_string(e + 1) + "," + fmt(r.model.history[e]) + "\n";
    }
    write_file(dir / ("model-s" + std::to_string(f.seeds[i]) + ".json"), dump_json(metanet_to_json(r.model)) + "\n");
    out << "seed " << f.seeds[i] << ": test tau " << r.metrics[2].tau << ", loss " << r.metrics[2].loss << "\n";
  }
  write_file(dir / "metrics.csv", metrics);
  write_file(dir / "history.csv", history);
  manifest.finish();
  return kExitOk;
}

struct EvalFlags {
  std::string model, zoo, split = "test", out;
  double threshold = -1.0;
  bool originals_only = false;
};

int cmd_eval(const EvalFlags& f, const std::string& command, std::ostream& out) {
  const Metanet model = metanet_from_json(parse_json(read_file(require_file(f.model))));
  const Zoo zoo = load_zoo(require_file(f.zoo));
  const Split split = parse_split(f.split);
  const fs::path path = resolve_out(f.out);
  ManifestWriter manifest(path.string() + ".run.json",
                          {command, config_hash(model.config), model.config.seed, "", "", "", {path.string()}});
  const auto entries = select(zoo, split, f.originals_only, f.threshold);
  if (entries.empty()) throw UsageError("no entries in split " + f.split + " above the threshold");
  const EvalMetrics m = evaluate(model, entries);
  ensure_parent(path);
  write_file(path, "seed,split,tau,loss,n\n" + metrics_row(model.config.seed, split, m));
  manifest.finish();
  out << f.split << ": tau " << m.tau << ", loss " << m.loss << ", n " << m.n << "\n";
  return kExitOk;
}

// --- verify -------------------------------------------------------------------

struct VerifyFlags {
  SuiteConfig suite;
  std::string fault = "none", out;
};

int cmd_verify(const VerifyFlags& f, const std::string& command, std::ostream& out) {
  const auto& known = suite_property_names();
  for (const auto& p : f.suite.properties) {
    if (std::find(known.begin(), known.end(), p) == known.end()) throw UsageError("unknown property '" + p + "'");
  }
  static const std::map<std::string, ActionFault> faults{
      {"none", ActionFault::kNone},
      {"monomial", ActionFault::kDropMonomialInverse},
      {"gl", ActionFault::kDropGlInverse}};
  std::optional<ManifestWriter> manifest;
  fs::path path;
  if (!f.out.empty()) {
    path = resolve_out(f.out);
    json opts{{"command", "verify"}, {"samples", f.suite.samples}, {"properties", f.suite.properties},
              {"fault", f.fault}, {"scale_high", f.suite.scale_high}, {"gl_spread", f.suite.gl_spread}};
    manifest.emplace(path.string() + ".run.json",
                     RunManifest{command, hash_json(opts), f.suite.seed, "", "", "", {path.string()}});
  }
  ScopedActionFault guard(faults.at(f.fault));
  const auto reports = run_suite(f.suite);
  out << reports_text(reports);
  if (manifest) {
    ensure_parent(path);
    write_file(path, reports_csv(reports));
    manifest->finish();
  }
  return all_pass(reports) ? kExitOk : kExitFailure;
}

// --- report -------------------------------------------------------------------

struct MetricRow {
  std::uint64_t seed;
  std::string split;
  double tau, loss;
  std::size_t n;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != header) throw UsageError(path.string() + ": expected header " + header);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(std::move(cells));
  }
  return rows;
}

struct ReportInput {
  std::string label;
  std::vector<MetricRow> metrics;
  std::map<std::size_t, std::vector<double>> history;  // epoch -> losses over seeds
};

ReportInput load_report_input(const std::string& in) {
  ReportInput r;
  fs::path metrics = in, history;
  if (fs::is_directory(in)) {
    metrics = fs::path(in) / "metrics.csv";
    history = fs::path(in) / "history.csv";
    r.label = fs::path(in).lexically_normal().filename().string();
    if (r.label.empty()) r.label = fs::path(in).lexically_normal().parent_path().filename().string();
  } else {
    r.label = fs::path(in).stem().string();
  }
  require_file(metrics.string());
  for (const auto& c : read_csv(metrics, "seed,split,tau,loss,n")) {
    if (c.size() != 5) throw UsageError(metrics.string() + ": malformed row");
    r.metrics.push_back({std::stoull(c[0]), c[1], std::stod(c[2]), std::stod(c[3]), std::stoul(c[4])});
  }
  if (!history.empty() && fs::is_regular_file(history)) {
    for (const auto& c : read_csv(history, "seed,epoch,loss")) {
      if (c.size() != 3) throw UsageError(history.string() + ": malformed row");
      r.history[std::stoul(c[1])].push_back(std::stod(c[2]));
    }
  }
  return r;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Frame {
  double x0 = 60, y0 = 20, w = 480, h = 260;
  double lo, hi;
  double y(double v) const { return y0 + h - (v - lo) / (hi - lo) * h; }
};

std::string svg_open(const std::string& title, const Frame& fr) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"340\" font-family=\"sans-serif\" "
                  "font-size=\"11\">\n<rect width=\"640\" height=\"340\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"14\" text-anchor=\"middle\">" + title + "</text>\n";
  s += "<rect x=\"" + svg_num(fr.x0) + "\" y=\"" + svg_num(fr.y0) + "\" width=\"" + svg_num(fr.w) + "\" height=\"" +
       svg_num(fr.h) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = fr.lo + (fr.hi - fr.lo) * k / 4.0;
    s += "<text x=\"" + svg_num(fr.x0 - 4) + "\" y=\"" + svg_num(fr.y(v) + 4) + "\" text-anchor=\"end\">" +
         svg_num(v) + "</text>\n";
  }
  return s;
}

Frame frame_for(double lo, double hi) {
  Frame fr;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  fr.lo = lo - pad;
  fr.hi = hi + pad;
  return fr;
}

// Mean test tau per input with standard-error bars, inputs in command-line order.
std::string tau_plot(const std::vector<std::pair<std::string, MeanSe>>& pts) {
  double lo = 1e300, hi = -1e300;
  for (const auto& [l, m] : pts) lo = std::min(lo, m.mean - m.se), hi = std::max(hi, m.mean + m.se);
  const Frame fr = frame_for(lo, hi);
  std::string s = svg_open("test Kendall tau by run (mean +- SE)", fr);
  std::string path;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = fr.x0 + fr.w * (i + 0.5) / static_cast<double>(pts.size());
    const auto& m = pts[i].second;
    s += "<line x1=\"" + svg_num(x) + "\" x2=\"" + svg_num(x) + "\" y1=\"" + svg_num(fr.y(m.mean - m.se)) +
         "\" y2=\"" + svg_num(fr.y(m.mean + m.se)) + "\" stroke=\"black\"/>\n";
    s += "<circle cx=\"" + svg_num(x) + "\" cy=\"" + svg_num(fr.y(m.mean)) + "\" r=\"3\" fill=\"" + kPalette[0] +
         "\"/>\n";
    s += "<text x=\"" + svg_num(x) + "\" y=\"" + svg_num(fr.y0 + fr.h + 14) + "\" text-anchor=\"middle\">" +
         pts[i].first + "</text>\n";
    path += (i ? " L" : "M") + svg_num(x) + " " + svg_num(fr.y(m.mean));
  }
  s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + kPalette[0] + "\"/>\n</svg>\n";
  return s;
}

std::string loss_plot(const std::vector<ReportInput>& inputs) {
  double lo = 1e300, hi = -1e300;
  std::size_t epochs = 1;
  for (const auto& in : inputs) {
    for (const auto& [e, v] : in.history) {
      const double m = mean_se(v).mean;
      lo = std::min(lo, m), hi = std::max(hi, m);
      epochs = std::max(epochs, e);
    }
  }
  const Frame fr = frame_for(lo, hi);
  std::string s = svg_open("mean training loss per epoch", fr);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::string path;
    for (const auto& [e, v] : inputs[i].history) {
      const double x = fr.x0 + fr.w * static_cast<double>(e) / static_cast<double>(epochs);
      path += (path.empty() ? "M" : " L") + svg_num(x) + " " + svg_num(fr.y(mean_se(v).mean));
    }
    const char* color = kPalette[i % std::size(kPalette)];
    s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color + "\"/>\n";
    s += "<text x=\"" + svg_num(fr.x0 + fr.w + 6) + "\" y=\"" + svg_num(fr.y0 + 12 + 14.0 * i) + "\" fill=\"" +
         color + "\">" + inputs[i].label + "</text>\n";
  }
  return s + "</svg>\n";
}

struct ReportFlags {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_report(const ReportFlags& f, const std::string& command, std::ostream& out) {
  std::vector<ReportInput> inputs;
  std::size_t rows = 0;
  for (const auto& in : f.inputs) {
    inputs.push_back(load_report_input(in));
    rows += inputs.back().metrics.size();
  }
  if (rows == 0) throw UsageError("report inputs contain no metric rows");
  const fs::path dir = resolve_out(f.out);
  std::vector<std::string> outputs{(dir / "summary.csv").string(), (dir / "tau.svg").string()};
  const bool any_history =
      std::any_of(inputs.begin(), inputs.end(), [](const auto& in) { return !in.history.empty(); });
  if (any_history) outputs.push_back((dir / "loss.svg").string());
  std::string key;
  for (const auto& in : f.inputs) key += hex64(fnv1a64(read_file(fs::is_directory(in) ? fs::path(in) / "metrics.csv" : fs::path(in))));
  ManifestWriter manifest(dir / "run.json", {command, hex64(fnv1a64(key)), 0, "", "", "", outputs});

  std::string summary = "label,split,n,tau_mean,tau_se,loss_mean,loss_se\n";
  std::vector<std::pair<std::string, MeanSe>> tau_pts;
  for (const auto& in : inputs) {
    for (const auto split : kSplits) {
      std::vector<double> tau, loss;
      for (const auto& r : in.metrics) {
        if (r.split == split_name(split)) tau.push_back(r.tau), loss.push_back(r.loss);
      }
      if (tau.empty()) continue;
      const MeanSe t = mean_se(tau), l = mean_se(loss);
      summary += in.label + "," + split_name(split) + "," + std::to_string(t.n) + "," + fmt(t.mean) + "," +
                 fmt(t.se) + "," + fmt(l.mean) + "," + fmt(l.se) + "\n";
      if (split == Split::kTest) tau_pts.emplace_back(in.label, t);
    }
  }
  fs::create_directories(dir);
  write_file(dir / "summary.csv", summary);
  write_file(dir / "tau.svg", tau_pts.empty() ? tau_plot({{"none", {}}}) : tau_plot(tau_pts));
  if (any_history) write_file(dir / "loss.svg", loss_plot(inputs));
  manifest.finish();
  out << summary;
  return kExitOk;
}

std::string join_command(const std::vector<std::string>& args) {
  std::string s = "wsym";
  for (const auto& a : args) s += " " + a;
  return s;
}

}  // namespace

json manifest_to_json(const RunManifest& m) {
  return {{"version", kSchemaVersion},
          {"kind", "run_manifest"},
          {"command", m.command},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"git_describe", m.git_describe},
          {"started", m.started},
          {"finished", m.finished.empty() ? json(nullptr) : json(m.finished)},
          {"outputs", m.outputs}};
}

RunManifest manifest_from_json(const json& j) {
  require_version(j);
  if (j.value("kind", "") != "run_manifest") throw SchemaError("not a run manifest");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.git_describe = j.at("git_describe").get<std::string>();
  m.started = j.at("started").get<std::string>();
  if (!j.at("finished").is_null()) m.finished = j.at("finished").get<std::string>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  return m;
}

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe r;
  r.n = xs.size();
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
  }
  return r;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"weight-space symmetry toolkit", "wsym"};
  app.require_subcommand(1);
  const std::string command = join_command(args);
  std::function<int()> action;

  auto* zoo = app.add_subcommand("zoo", "generate or augment model zoos");
  zoo->require_subcommand(1);
  ZooGenFlags gen;
  auto* gen_cmd = zoo->add_subcommand("gen", "train a synthetic zoo");
  gen_cmd->add_option("--n", gen.n, "number of networks")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--task", gen.task, "2d-two-class | 1d-regression | sequence-majority | sum-sign");
  gen_cmd->add_option("--arch", gen.arch, "mlp | mha")->check(CLI::IsMember({"mlp", "mha"}));
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out, "zoo JSON path")->required();
  gen_cmd->callback([&] { action = [&] { return cmd_zoo_gen(gen, command, out); }; });

  ZooAugmentFlags aug;
  auto* aug_cmd = zoo->add_subcommand("augment", "add certified orbit copies");
  aug_cmd->add_option("--in", aug.in)->required();
  aug_cmd->add_option("--factor", aug.opts.factor)->check(CLI::PositiveNumber);
  aug_cmd->add_option("--scale-exp", aug.opts.scale_exp, "diagonal entries ~ U[1, 10^i]")->check(CLI::Range(1, 4));
  aug_cmd->add_option("--gl-spread", aug.opts.gl_spread)->check(CLI::PositiveNumber);
  aug_cmd->add_flag("--permute,!--no-permute", aug.opts.permute);
  aug_cmd->add_option("--seed", aug.seed);
  aug_cmd->add_option("--out", aug.out)->required();
  aug_cmd->callback([&] { action = [&] { return cmd_zoo_augment(aug, command, out); }; });

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "train metanetworks, one per seed");
  train_cmd->add_option("--zoo", tr.zoo)->required();
  train_cmd->add_option("--config", tr.config, "metanet config JSON; absent fields keep the preset");
  train_cmd->add_option("--preset", tr.preset)->check(CLI::IsMember({"desk", "paper"}));
  train_cmd->add_option("--seed,--seeds", tr.seeds)->expected(1, -1);
  train_cmd->add_option("--quasi", tr.quasi)->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--jobs", tr.jobs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->callback([&] { action = [&] { return cmd_train(tr, command, out); }; });

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--zoo", ev.zoo)->required();
  eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--threshold", ev.threshold, "keep entries with label >= p");
  eval_cmd->add_flag("--originals-only", ev.originals_only);
  eval_cmd->add_option("--out", ev.out, "metrics CSV path")->required();
  eval_cmd->callback([&] { action = [&] { return cmd_eval(ev, command, out); }; });

  VerifyFlags vf;
  auto* verify_cmd = app.add_subcommand("verify", "run the property suite");
  verify_cmd->add_option("--samples", vf.suite.samples)->check(CLI::PositiveNumber);
  verify_cmd->add_option("--property", vf.suite.properties);
  verify_cmd->add_option("--seed", vf.suite.seed);
  verify_cmd->add_option("--scale-high", vf.suite.scale_high)->check(CLI::Range(1.0, 1e6));
  verify_cmd->add_option("--gl-spread", vf.suite.gl_spread)->check(CLI::PositiveNumber);
  verify_cmd->add_option("--fault", vf.fault, "inject an action bug")
      ->check(CLI::IsMember({"none", "monomial", "gl"}));
  verify_cmd->add_option("--out", vf.out, "report CSV path");
  verify_cmd->callback([&] { action = [&] { return cmd_verify(vf, command, out); }; });

  ReportFlags rp;
  auto* report_cmd = app.add_subcommand("report", "summarize runs as CSV and SVG");
  report_cmd->add_option("--in", rp.inputs, "run directories or metrics CSVs")->required()->expected(1, -1);
  report_cmd->add_option("--out", rp.out)->required();
  report_cmd->callback([&] { action = [&] { return cmd_report(rp, command, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace wsym
