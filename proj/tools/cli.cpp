#include "cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "falter/classify.hpp"
#include "falter/errors.hpp"
#include "falter/growth_data.hpp"
#include "falter/report.hpp"
#include "falter/simulation.hpp"
#include "falter/velocity.hpp"

namespace falter::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kIncomplete = "INCOMPLETE";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// INI value for the resolved-config file; arrays use the [a,b] form CLI11 reads back.
std::string ini_value(const ordered_json& v) {
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + ini_value(v[i]);
    return out + "]";
  }
  if (v.is_string()) return "\"" + v.get<std::string>() + "\"";
  if (v.is_number_float()) return format_double(v.get<double>());
  return v.dump();
}

// Owns an output directory for one run. The INCOMPLETE marker stays behind
// if the run dies before finish().
class Output {
 public:
  Output(const std::string& dir, bool deterministic)
      : dir_(dir), deterministic_(deterministic), started_(std::chrono::steady_clock::now()) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
    fs::remove(dir_ / "manifest.json", ec);
    std::ofstream(dir_ / kIncomplete) << "run in progress or interrupted\n";
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + (dir_ / name).string() + "'");
    out << content;
    out.flush();
    if (!out) throw ConfigError("write failed for '" + (dir_ / name).string() + "'");
    files_.push_back(name);
  }

  template <class F>
  void write_with(const std::string& name, F&& fill) {
    std::ostringstream ss;
    fill(ss);
    write(name, ss.str());
  }

  void warn(const std::string& message) {
    std::cerr << "warning: " << message << '\n';
    warnings_.push_back(message);
  }

  void finish(const std::string& command, const ordered_json& config) {
    std::string ini = "[" + command + "]\n";
    for (const auto& [key, value] : config.items()) ini += key + "=" + ini_value(value) + "\n";
    write("config.ini", ini);

    ordered_json m;
    m["tool"] = "faltering";
    m["command"] = command;
    m["config"] = config;
    m["rerun"] = "faltering --config " + fs::absolute(dir_ / "config.ini").string() + " " + command;
    std::sort(files_.begin(), files_.end());
    m["files"] = files_;
    m["warnings"] = warnings_;
    if (!deterministic_) {
      m["threads"] = omp_get_max_threads();
      const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      std::ostringstream ts;
      ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
      m["created_utc"] = ts.str();
      m["elapsed_seconds"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    }
    std::ofstream(dir_ / "manifest.json") << m.dump(2) << '\n';
    fs::remove(dir_ / kIncomplete);
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  bool deterministic_;
  std::chrono::steady_clock::time_point started_;
  std::vector<std::string> files_;
  std::vector<std::string> warnings_;
};

struct Common {
  std::string out = "falter-output";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool quiet = false;
  int threads = 0;

  void add(CLI::App* app, bool seeded) {
    app->add_flag("-q,--quiet", quiet, "No report on standard output");
    app->add_option("-o,--out", out, "Output directory")->envname("FALTER_OUTPUT_DIR");
    app->add_flag("--deterministic", deterministic, "Leave timestamps and timings out of the manifest");
    app->add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
    if (seeded) app->add_option("--seed", seed, "Random seed; generated and recorded when absent");
  }

  std::uint64_t resolve_seed() {
    if (!seed) seed = fresh_seed();
    return *seed;
  }

  void apply_threads() const {
    if (threads > 0) omp_set_num_threads(threads);
  }

  void echo(ordered_json& j) const {
    if (seed) j["seed"] = *seed;
    j["deterministic"] = deterministic;
    if (threads > 0) j["threads"] = threads;
  }
};

struct DataOptions {
  std::string input;
  std::string age_unit = "years";
  double window_start = 0.0;
  double window_end = 1.0;
  double exclusion_bound = kDefaultExclusionBound;
  std::vector<double> knots;
  std::vector<std::string> metrics{"MRS"};
  std::string estimator = "reml";
  bool drop_baseline_row = false;

  void add(CLI::App* app) {
    app->add_option("-i,--input", input, "Growth table with columns child_id,age,zscore")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--age-unit", age_unit, "Unit of the age column")
        ->check(CLI::IsMember({"years", "days"}, CLI::ignore_case));
    app->add_option("--window-start", window_start, "Analysis window start (years)");
    app->add_option("--window-end", window_end, "Analysis window end (years)");
    app->add_option("--exclusion-bound", exclusion_bound, "Drop rows with |z| above this");
    app->add_option("--knots", knots, "Internal knots (default: four evenly spaced over the window)")
        ->delimiter(',');
    app->add_option("--metrics", metrics, "Metrics: SDS,cSDS,RS,cRS,ARS,cARS,MRS,cMRS or all")
        ->delimiter(',');
    app->add_option("--estimator", estimator, "Variance estimator")
        ->check(CLI::IsMember({"reml", "ml"}, CLI::ignore_case));
    app->add_flag("--drop-baseline-row", drop_baseline_row,
                  "Conditional models: leave the baseline measurement out of the response");
  }

  AnalysisWindow window() const { return AnalysisWindow(window_start, window_end); }

  VelocityConfig velocity_config() const {
    VelocityConfig vc;
    vc.window = window();
    vc.knots = knots.empty() ? KnotVector::evenly_spaced(window_start, window_end, 4)
                             : KnotVector(knots, window_end);
    vc.fit.estimator = lower(estimator) == "ml" ? Estimator::ML : Estimator::REML;
    vc.fit.drop_baseline_row = drop_baseline_row;
    vc.fit.kernel = KernelMode::Parallel;
    return vc;
  }

  std::vector<Metric> parsed_metrics() const {
    std::vector<Metric> out;
    for (const auto& name : metrics) {
      if (lower(name) == "all") {
        out.assign(kAllMetrics.begin(), kAllMetrics.end());
        return out;
      }
      const Metric m = parse_metric(name);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (out.empty()) throw ConfigError("no metrics requested");
    return out;
  }

  IngestResult load() const {
    auto in = open_input(input);
    return ingest(in, lower(age_unit) == "days" ? AgeUnit::Days : AgeUnit::Years, window(),
                  exclusion_bound);
  }

  void echo(ordered_json& j) const {
    j["input"] = fs::absolute(input).string();
    j["age_unit"] = lower(age_unit);
    j["window_start"] = window_start;
    j["window_end"] = window_end;
    j["exclusion_bound"] = exclusion_bound;
    j["knots"] = velocity_config().knots.internal_knots();
    std::vector<std::string> names;
    for (Metric m : parsed_metrics()) names.emplace_back(to_string(m));
    j["metrics"] = names;
    j["estimator"] = lower(estimator);
    j["drop_baseline_row"] = drop_baseline_row;
  }
};

struct ClassifyOptions {
  std::string classifier = "mm";
  double proportion = 0.10;
  double cutoff = 0.5;
  std::size_t bins = 30;

  void add(CLI::App* app) {
    app->add_option("--classifier", classifier, "mm, threshold or both")
        ->check(CLI::IsMember({"mm", "threshold", "th", "both"}, CLI::ignore_case));
    app->add_option("--proportion", proportion, "Threshold classifier: share labelled faltering")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--cutoff", cutoff, "Mixture classifier: posterior cutoff")->check(CLI::Range(0.0, 1.0));
    app->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);
  }

  bool want_mm() const { return lower(classifier) == "mm" || lower(classifier) == "both"; }
  bool want_th() const { return lower(classifier) != "mm"; }

  void echo(ordered_json& j) const {
    const auto c = lower(classifier);
    j["classifier"] = c == "th" ? "threshold" : c;
    j["proportion"] = proportion;
    j["cutoff"] = cutoff;
    j["bins"] = bins;
  }
};

struct Labelled {
  std::optional<MixtureFit> mixture;
  std::optional<Classification> mm;
  std::optional<Classification> th;
};

// Mixture summary, labels, histogram and density for one velocity table.
Labelled classify_and_write(Output& out, const VelocityTable& table, const ClassifyOptions& opt,
                            std::uint64_t seed) {
  const std::string m(to_string(table.metric));
  Labelled result;
  const auto values = table.values();
  try {
    result.mixture = fit_gmm2(table, seed);
  } catch (const DataError& e) {
    if (opt.want_mm()) throw;
    out.warn(m + ": no mixture summary (" + e.what() + ")");
  }
  if (result.mixture) {
    const auto& mix = *result.mixture;
    if (!mix.converged) out.warn(m + ": EM reached its iteration limit");
    if (mix.collapsed) out.warn(m + ": a mixture component collapsed to the variance floor");
    out.write("mixture_" + m + ".json", mix.to_json() + "\n");
    out.write_with("histogram_" + m + ".csv",
                   [&](std::ostream& os) { write_histogram_csv(os, values, mix, opt.bins); });
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double pad = 0.1 * (*hi - *lo);
    out.write_with("density_" + m + ".csv", [&](std::ostream& os) {
      write_density_grid_csv(os, *lo - pad, *hi + pad, mix, 201);
    });
  }
  if (opt.want_mm()) {
    result.mm = mm_classify(*result.mixture, opt.cutoff);
    out.write_with("labels_" + m + "_MM.csv", [&](std::ostream& os) { result.mm->write_csv(os); });
  }
  if (opt.want_th()) {
    result.th = threshold_classify(table, opt.proportion);
    out.write_with("labels_" + m + "_TH.csv", [&](std::ostream& os) { result.th->write_csv(os); });
  }
  if (result.mm && result.th) {
    const auto stats = agreement(*result.th, *result.mm);
    out.write("agreement_" + m + ".json", stats.to_json() + "\n");
  }
  return result;
}

ModelKind kind_for(Metric metric) {
  switch (metric) {
    case Metric::RS: return ModelKind::RS;
    case Metric::cRS: return ModelKind::cRS;
    case Metric::cSDS:
    case Metric::cARS:
    case Metric::cMRS: return ModelKind::cBrokenStick;
    default: return ModelKind::BrokenStick;
  }
}

std::string_view kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::RS: return "RS";
    case ModelKind::cRS: return "cRS";
    case ModelKind::BrokenStick: return "broken_stick";
    case ModelKind::cBrokenStick: return "conditional_broken_stick";
  }
  return "?";
}

void write_models(Output& out, VelocityEngine& engine, const std::vector<ModelKind>& kinds) {
  if (kinds.empty()) return;
  std::string body = "{\n";
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const auto& fit = engine.model(kinds[i]);
    if (!fit.converged) out.warn(std::string(kind_name(kinds[i])) + " fit did not meet the convergence tolerance");
    body += "\"" + std::string(kind_name(kinds[i])) + "\": " + fit.to_json() + (i + 1 < kinds.size() ? ",\n" : "\n");
  }
  body += "}\n";
  out.write("models.json", ordered_json::parse(body).dump(2) + "\n");
}

std::vector<ModelKind> kinds_used(const std::vector<Metric>& metrics) {
  std::vector<ModelKind> kinds;
  for (Metric m : metrics) {
    if (m == Metric::SDS || m == Metric::cSDS) continue;
    const auto k = kind_for(m);
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  std::sort(kinds.begin(), kinds.end());
  return kinds;
}

void report_velocity(const VelocityTable& t) {
  std::cerr << to_string(t.metric) << ": " << t.entries.size() << " children";
  if (!t.undefined.empty()) std::cerr << ", " << t.undefined.size() << " undefined";
  std::cerr << '\n';
}

// ---- simulate / report -----------------------------------------------------

std::string report_markdown(const ScenarioReport& rep, const std::string& title) {
  std::ostringstream os;
  os << "# " << title << "\n\n";
  os << "Mean true positives over " << rep.replications << " replications.\n\n";
  os << "| Subgroup | N |";
  for (Metric m : kSimulationMetrics)
    for (Classifier c : kClassifiers) os << ' ' << to_string(m) << ' ' << to_string(c) << " |";
  os << "\n|---|---|";
  for (std::size_t i = 0; i < 8; ++i) os << "---|";
  os << '\n';
  std::size_t total_n = 0;
  for (std::size_t g = 0; g <= 4; ++g) {
    const std::size_t n = g < 4 ? rep.subgroup_sizes[g] : total_n;
    total_n += g < 4 ? n : 0;
    os << "| " << (g < 4 ? std::string(to_string(static_cast<Subgroup>(g + 1))) : std::string("Total"))
       << " | " << n << " |";
    for (Metric m : kSimulationMetrics)
      for (Classifier c : kClassifiers)
        os << ' ' << format_fixed(g < 4 ? rep.subgroup(m, c, static_cast<Subgroup>(g + 1)) : rep.total(m, c), 2)
           << " |";
    os << '\n';
  }
  os << "\nAgreement between TH and MM labels.\n\n";
  os << "| Metric | %D | kappa | %Sig |\n|---|---|---|---|\n";
  for (Metric m : kSimulationMetrics)
    os << "| " << to_string(m) << " | " << format_fixed(rep.discordance(m), 2) << " | "
       << format_fixed(rep.kappa(m), 3) << " | " << format_fixed(rep.significant(m), 0) << " |\n";
  if (rep.nonconverged_fits > 0)
    os << "\n" << rep.nonconverged_fits << " model fits stopped short of the convergence tolerance.\n";
  return os.str();
}

void write_report_files(Output& out, const std::vector<ReplicationResult>& results, const std::string& title,
                        bool quiet) {
  const auto rep = aggregate(results);
  out.write_with("true_positives.csv", [&](std::ostream& os) { rep.write_true_positives_csv(os); });
  out.write_with("agreement.csv", [&](std::ostream& os) { rep.write_agreement_csv(os); });
  const auto md = report_markdown(rep, title);
  out.write("report.md", md);
  if (!quiet) std::cout << md;
  if (rep.nonconverged_fits > 0)
    out.warn(std::to_string(rep.nonconverged_fits) + " fits did not meet the convergence tolerance");
}

struct SimulateCmd {
  Common common;
  std::string design = "dense";
  double proportion = 0.10;
  std::size_t reps = 100;
  std::size_t children = 1000;
  std::optional<double> sigma_omega, sigma_epsilon;
  std::string execution = "parallel";
  std::size_t export_cohorts = 0;

  void add(CLI::App* app) {
    common.add(app, true);
    app->add_option("--design", design, "Measurement design")
        ->check(CLI::IsMember({"dense", "sparse"}, CLI::ignore_case));
    app->add_option("--proportion", proportion, "Share of faltering children")->check(CLI::Range(0.0, 1.0));
    app->add_option("--reps", reps, "Replications")->check(CLI::PositiveNumber);
    app->add_option("--children", children, "Children per cohort")->check(CLI::PositiveNumber);
    app->add_option("--sigma-omega", sigma_omega, "Random-intercept standard deviation");
    app->add_option("--sigma-epsilon", sigma_epsilon, "Residual standard deviation");
    app->add_option("--execution", execution, "Run replications serially or over OpenMP threads")
        ->check(CLI::IsMember({"serial", "parallel"}, CLI::ignore_case));
    app->add_option("--export-cohorts", export_cohorts,
                    "Also write the data and true subgroups of the first N cohorts");
  }

  int run() {
    common.apply_threads();
    auto cfg = ScenarioConfig::preset(parse_design(lower(design)), proportion);
    cfg.n_replications = reps;
    cfg.n_children = children;
    if (sigma_omega) cfg.sigma_omega = *sigma_omega;
    if (sigma_epsilon) cfg.sigma_epsilon = *sigma_epsilon;
    cfg.seed = common.resolve_seed();
    cfg.validate();

    Output out(common.out, common.deterministic);
    const auto exec = lower(execution) == "serial" ? Execution::Serial : Execution::Parallel;
    if (!common.quiet)
      std::cerr << "simulating " << reps << " replications of " << children << " children (" << lower(design)
              << ", " << format_double(100.0 * proportion) << "% faltering, seed " << cfg.seed << ")\n";
    const auto results = run_scenario(cfg, exec);
    out.write_with("replications.csv", [&](std::ostream& os) { write_replications_csv(os, results); });
    write_report_files(out, results,
                       "Simulation: " + lower(design) + " design, " + format_double(100.0 * proportion) +
                           "% faltering",
                       common.quiet);
    for (std::size_t r = 0; r < std::min(export_cohorts, reps); ++r) {
      const auto cohort = generate_population(cfg, r);
      out.write_with("cohort_" + std::to_string(r) + ".csv",
                     [&](std::ostream& os) { cohort.dataset.write_csv(os); });
      out.write_with("truth_" + std::to_string(r) + ".csv", [&](std::ostream& os) {
        os << "child_id,subgroup\n";
        for (const auto& [id, g] : cohort.truth) os << id << ',' << to_string(g) << '\n';
      });
    }

    ordered_json j;
    j["design"] = lower(design);
    j["proportion"] = proportion;
    j["reps"] = reps;
    j["children"] = children;
    j["sigma_omega"] = cfg.sigma_omega;
    j["sigma_epsilon"] = cfg.sigma_epsilon;
    j["execution"] = lower(execution);
    j["export_cohorts"] = export_cohorts;
    common.echo(j);
    out.finish("simulate", j);
    return kExitOk;
  }
};

struct ReportCmd {
  Common common;
  std::string from;

  void add(CLI::App* app) {
    common.add(app, false);
    app->add_option("--from", from, "simulate output directory or a replications.csv file")
        ->required()
        ->check(CLI::ExistingPath);
  }

  int run() {
    fs::path path(from);
    if (fs::is_directory(path)) path /= "replications.csv";
    auto in = open_input(path);
    const auto results = read_replications_csv(in);
    if (results.empty()) throw DataError("'" + path.string() + "' holds no replications");
    Output out(common.out, common.deterministic);
    write_report_files(out, results, "Simulation report", common.quiet);
    ordered_json j;
    j["from"] = fs::absolute(from).string();
    common.echo(j);
    out.finish("report", j);
    return kExitOk;
  }
};

// ---- analyze / velocity / classify / agree ---------------------------------

struct AnalyzeCmd {
  Common common;
  DataOptions data;
  ClassifyOptions classify;
  std::size_t trajectories = 5;

  void add(CLI::App* app) {
    common.add(app, true);
    data.add(app);
    classify.add(app);
    app->add_option("--trajectories", trajectories, "Children per label in the trajectory extract");
  }

  int run() {
    common.apply_threads();
    const auto seed = common.resolve_seed();
    const auto metrics = data.parsed_metrics();
    const auto vc = data.velocity_config();
    auto loaded = data.load();
    Output out(common.out, common.deterministic);
    out.write("ingest.json", loaded.report.to_json() + "\n");
    out.write_with("dataset.csv", [&](std::ostream& os) { loaded.dataset.write_csv(os); });

    VelocityEngine engine(loaded.dataset, vc);
    for (Metric metric : metrics) {
      const auto table = engine.table(metric);
      report_velocity(table);
      const std::string m(to_string(metric));
      out.write_with("velocities_" + m + ".csv", [&](std::ostream& os) { table.write_csv(os); });
      const auto labelled = classify_and_write(out, table, classify, seed);
      if (trajectories > 0) {
        const auto& labels = labelled.mm ? *labelled.mm : *labelled.th;
        const auto& fit = engine.model(kind_for(metric));
        out.write_with("trajectories_" + m + ".csv", [&](std::ostream& os) {
          write_trajectories_csv(os, loaded.dataset, fit, labels, trajectories, seed);
        });
      }
    }
    auto kinds = kinds_used(metrics);
    if (trajectories > 0)
      for (Metric m : metrics)
        if (std::find(kinds.begin(), kinds.end(), kind_for(m)) == kinds.end()) kinds.push_back(kind_for(m));
    std::sort(kinds.begin(), kinds.end());
    write_models(out, engine, kinds);

    ordered_json j;
    data.echo(j);
    classify.echo(j);
    j["trajectories"] = trajectories;
    common.echo(j);
    out.finish("analyze", j);
    return kExitOk;
  }
};

struct VelocityCmd {
  Common common;
  DataOptions data;

  void add(CLI::App* app) {
    common.add(app, false);
    data.add(app);
  }

  int run() {
    common.apply_threads();
    const auto metrics = data.parsed_metrics();
    auto loaded = data.load();
    Output out(common.out, common.deterministic);
    out.write("ingest.json", loaded.report.to_json() + "\n");
    VelocityEngine engine(loaded.dataset, data.velocity_config());
    for (Metric metric : metrics) {
      const auto table = engine.table(metric);
      report_velocity(table);
      out.write_with("velocities_" + std::string(to_string(metric)) + ".csv",
                     [&](std::ostream& os) { table.write_csv(os); });
    }
    write_models(out, engine, kinds_used(metrics));
    ordered_json j;
    data.echo(j);
    common.echo(j);
    out.finish("velocity", j);
    return kExitOk;
  }
};

struct ClassifyCmd {
  Common common;
  std::string velocities;
  ClassifyOptions classify;

  void add(CLI::App* app) {
    common.add(app, true);
    app->add_option("--velocities", velocities, "Velocity table written by velocity or analyze")
        ->required()
        ->check(CLI::ExistingFile);
    classify.add(app);
  }

  int run() {
    const auto seed = common.resolve_seed();
    auto in = open_input(velocities);
    const auto table = VelocityTable::read_csv(in);
    Output out(common.out, common.deterministic);
    classify_and_write(out, table, classify, seed);
    ordered_json j;
    j["velocities"] = fs::absolute(velocities).string();
    classify.echo(j);
    common.echo(j);
    out.finish("classify", j);
    return kExitOk;
  }
};

struct AgreeCmd {
  Common common;
  std::string a, b;

  void add(CLI::App* app) {
    common.add(app, false);
    app->add_option("-a,--labels-a", a, "First label file")->required()->check(CLI::ExistingFile);
    app->add_option("-b,--labels-b", b, "Second label file")->required()->check(CLI::ExistingFile);
  }

  int run() {
    auto ia = open_input(a);
    auto ib = open_input(b);
    const auto stats = agreement(Classification::read_csv(ia), Classification::read_csv(ib));
    Output out(common.out, common.deterministic);
    const auto text = stats.to_json() + "\n";
    out.write("agreement.json", text);
    if (!common.quiet) std::cout << text;
    ordered_json j;
    j["labels_a"] = fs::absolute(a).string();
    j["labels_b"] = fs::absolute(b).string();
    common.echo(j);
    out.finish("agree", j);
    return kExitOk;
  }
};

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Growth faltering: velocity metrics, mixture classification and simulation"};
  app.set_config("--config", "", "INI/TOML file of option values; flags override it");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SimulateCmd simulate;
  AnalyzeCmd analyze;
  VelocityCmd velocity;
  ClassifyCmd classify;
  AgreeCmd agree;
  ReportCmd report;
  auto* s_sim = app.add_subcommand("simulate", "Run a simulation scenario");
  auto* s_ana = app.add_subcommand("analyze", "Velocities, classification and plot data for a cohort");
  auto* s_vel = app.add_subcommand("velocity", "Velocity tables only");
  auto* s_cls = app.add_subcommand("classify", "Classify a velocity table");
  auto* s_agr = app.add_subcommand("agree", "Agreement between two label files");
  auto* s_rep = app.add_subcommand("report", "Tables from saved simulation replications");
  simulate.add(s_sim);
  analyze.add(s_ana);
  velocity.add(s_vel);
  classify.add(s_cls);
  agree.add(s_agr);
  report.add(s_rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s_sim) return simulate.run();
    if (*s_ana) return analyze.run();
    if (*s_vel) return velocity.run();
    if (*s_cls) return classify.run();
    if (*s_agr) return agree.run();
    if (*s_rep) return report.run();
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace falter::cli
