#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pve/cond_density.hpp"
#include "pve/csv.hpp"
#include "pve/distributions.hpp"
#include "pve/errors.hpp"
#include "pve/inference.hpp"
#include "pve/interval.hpp"
#include "pve/matrix.hpp"
#include "pve/selection.hpp"
#include "pve/sim.hpp"

namespace {

using nlohmann::ordered_json;
using namespace pve;

constexpr int kSchemaVersion = 1;

ordered_json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

ordered_json interval_json(const RealInterval& iv) {
  return ordered_json::array({number_or_null(iv.lo), number_or_null(iv.hi)});
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + "\"";
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot open output file: " + path);
  out << text;
}

RuleKind parse_rule(const std::string& name) {
  if (name == "derivative") return RuleKind::derivative;
  if (name == "zg") return RuleKind::zg;
  if (name == "none") return RuleKind::none;
  throw InvalidInputError("unknown rule: " + name);
}

// ---------------------------------------------------------------------------
// infer

struct InferOptions {
  std::string input_path;
  bool header = false;
  std::string rule_name = "zg";
  double alpha = 0.1;
  double alpha_split = 0.75;
  double c = 1.0;
  double sigma = 0.0;
  bool sigma_given = false;
  bool estimate_sigma = false;
  bool center = false;
  std::uint64_t seed = 1;
  std::string output_path;
  std::string format = "json";
};

struct ComponentRecord {
  InferenceReport report;
  std::string error;  // empty when inference completed
};

std::string render_infer_json(const InferOptions& opt, const DataMatrix& x,
                              const NoiseModel& base, const ThinnedPair& pair,
                              const SvdFactorization& svd1, int r,
                              double alpha1, double alpha2,
                              const std::vector<ComponentRecord>& records,
                              const std::vector<TruncationSet>& trunc_sets) {
  ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["command"] = "infer";
  out["input"] = opt.input_path;
  out["n"] = x.n();
  out["p"] = x.p();
  out["centered"] = opt.center;
  out["rule"] = opt.rule_name;
  out["alpha"] = opt.alpha;
  out["alpha1"] = alpha1;
  out["alpha2"] = alpha2;
  out["c"] = opt.c;
  out["seed"] = opt.seed;
  out["noise"] = {
      {"sigma2", base.sigma2},
      {"source", base.source == NoiseSource::known ? "known" : "estimated"},
      {"sigma1_2", pair.sigma1_2},
      {"sigma_c2", pair.sigma_c2},
  };

  ordered_json scree;
  scree["selected_r"] = r;
  ordered_json values = ordered_json::array();
  ordered_json pves = ordered_json::array();
  for (int k = 1; k <= x.p(); ++k) {
    values.push_back(svd1.s(k - 1));
    pves.push_back(sample_pve(svd1.s, k));
  }
  scree["singular_values"] = values;
  scree["sample_pve"] = pves;
  ordered_json tsets = ordered_json::array();
  for (int k = 1; k <= r; ++k) {
    ordered_json pieces = ordered_json::array();
    for (const auto& piece : trunc_sets[k - 1].pieces())
      pieces.push_back(interval_json(piece));
    tsets.push_back({{"k", k}, {"pieces", pieces}});
  }
  scree["truncation_sets"] = tsets;
  out["scree"] = scree;

  ordered_json inferences = ordered_json::array();
  for (const auto& rec : records) {
    ordered_json item;
    item["k"] = rec.report.k;
    if (!rec.error.empty()) {
      item["error"] = rec.error;
      inferences.push_back(item);
      continue;
    }
    item["error"] = nullptr;
    item["p_value"] = rec.report.p_value;
    item["delta_interval"] = interval_json(rec.report.delta_interval);
    item["num_sq_interval"] = interval_json(rec.report.num_sq_interval);
    item["denom_interval"] = interval_json(rec.report.denom_interval);
    item["pve_interval"] = interval_json(rec.report.pve_interval);
    item["pve_interval_raw"] = interval_json(rec.report.pve_interval_raw);
    item["delta_mle"] = rec.report.delta_mle;
    item["pve_mle"] = rec.report.pve_mle ? ordered_json(*rec.report.pve_mle)
                                         : ordered_json(nullptr);
    item["interval_degenerate"] = rec.report.interval_degenerate;
    inferences.push_back(item);
  }
  out["inferences"] = inferences;
  return out.dump(2) + "\n";
}

std::string render_infer_csv(const DataMatrix& x, const SvdFactorization& svd1,
                             int r, const std::vector<ComponentRecord>& records,
                             const std::vector<TruncationSet>& trunc_sets) {
  std::ostringstream out;
  out << "k,singular_value,sample_pve,selected,r,truncation,p_value,"
         "delta_lo,delta_hi,num_sq_lo,num_sq_hi,denom_lo,denom_hi,"
         "pve_lo,pve_hi,pve_raw_lo,pve_raw_hi,delta_mle,pve_mle,"
         "interval_degenerate,error\n";
  for (int k = 1; k <= x.p(); ++k) {
    out << k << ',' << format_number(svd1.s(k - 1)) << ','
        << format_number(sample_pve(svd1.s, k)) << ',' << (k <= r ? 1 : 0)
        << ',' << r << ',';
    if (k <= r) {
      std::string joined;
      for (const auto& piece : trunc_sets[k - 1].pieces()) {
        if (!joined.empty()) joined += '|';
        joined += format_number(piece.lo) + ':' + format_number(piece.hi);
      }
      out << csv_escape(joined);
    }
    if (k > r) {
      out << ",,,,,,,,,,,,,,,\n";
      continue;
    }
    const auto& rec = records[k - 1];
    if (!rec.error.empty()) {
      out << ",,,,,,,,,,,,,," << csv_escape(rec.error) << "\n";
      continue;
    }
    const auto& rep = rec.report;
    out << ',' << format_number(rep.p_value) << ','
        << format_number(rep.delta_interval.lo) << ','
        << format_number(rep.delta_interval.hi) << ','
        << format_number(rep.num_sq_interval.lo) << ','
        << format_number(rep.num_sq_interval.hi) << ','
        << format_number(rep.denom_interval.lo) << ','
        << format_number(rep.denom_interval.hi) << ','
        << format_number(rep.pve_interval.lo) << ','
        << format_number(rep.pve_interval.hi) << ','
        << format_number(rep.pve_interval_raw.lo) << ','
        << format_number(rep.pve_interval_raw.hi) << ','
        << format_number(rep.delta_mle) << ','
        << (rep.pve_mle ? format_number(*rep.pve_mle) : std::string()) << ','
        << (rep.interval_degenerate ? 1 : 0) << ",\n";
  }
  return out.str();
}

int cmd_infer(const InferOptions& opt) {
  if (opt.estimate_sigma == opt.sigma_given)
    throw InvalidInputError(
        "provide exactly one of --sigma and --estimate-sigma");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0))
    throw InvalidInputError("--alpha must lie strictly between 0 and 1");
  if (!(opt.alpha_split > 0.0 && opt.alpha_split < 1.0))
    throw InvalidInputError("--alpha-split must lie strictly between 0 and 1");
  if (!(opt.c > 0.0)) throw InvalidInputError("--c must be positive");
  if (opt.sigma_given && !(opt.sigma > 0.0))
    throw InvalidInputError("--sigma must be positive");
  if (opt.format != "json" && opt.format != "csv")
    throw InvalidInputError("--format must be json or csv");

  Eigen::MatrixXd raw = load_csv(opt.input_path, opt.header);
  if (raw.rows() < 2)
    throw InvalidInputError("need at least 2 data rows, got " +
                            std::to_string(raw.rows()));
  if (raw.rows() < raw.cols())
    throw DimensionError(
        "input has " + std::to_string(raw.rows()) + " rows and " +
        std::to_string(raw.cols()) +
        " columns; rows must be observations (n >= p) — transpose the file "
        "if variables currently sit in rows");

  DataMatrix x = DataMatrix::from(std::move(raw));
  if (opt.center) x = center_reduce(x);

  const SelectionRule rule{parse_rule(opt.rule_name)};
  NoiseModel base{opt.sigma, NoiseSource::known};
  if (opt.estimate_sigma)
    base = estimate_sigma2(compute_svd(x).s, x.n(), x.p());

  const ThinnedPair pair = thin(x, opt.c, base, opt.seed);
  const SvdFactorization svd1 = compute_svd(pair.x1);
  const int r = select_rank(svd1.s, rule);
  const double alpha1 = opt.alpha_split * opt.alpha;
  const double alpha2 = (1.0 - opt.alpha_split) * opt.alpha;
  const double k1_cap = 2.0 * svd1.s(0) + 1.0;  // mirrors the density context

  std::vector<TruncationSet> trunc_sets;
  std::vector<ComponentRecord> records;
  for (int k = 1; k <= r; ++k) {
    trunc_sets.push_back(
        truncation_set(svd1.s, k, rule, kDefaultSelectionGrid, k1_cap));
    ComponentRecord rec;
    rec.report.k = k;
    try {
      rec.report = ci_pve(pair, svd1, k, rule, alpha1, alpha2);
      rec.report.p_value = p_value(svd1, k, rule, pair.noise1());
      rec.report.delta_mle = mle_delta(svd1, k, rule, pair.noise1());
      rec.report.pve_mle = mle_pve(pair, svd1, k, rule);
    } catch (const DegenerateDensityError& e) {
      rec.error = e.what();
    } catch (const NumericalError& e) {
      rec.error = e.what();
    }
    records.push_back(std::move(rec));
  }

  const std::string text =
      opt.format == "json"
          ? render_infer_json(opt, x, base, pair, svd1, r, alpha1, alpha2,
                              records, trunc_sets)
          : render_infer_csv(x, svd1, r, records, trunc_sets);
  write_text(opt.output_path, text);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string experiment;
  std::string rule_name = "zg";
  SimConfig config;
  std::string output_path;
  std::string format = "json";
};

ExperimentKind parse_experiment(const std::string& name) {
  if (name == "type1") return ExperimentKind::type1;
  if (name == "power") return ExperimentKind::power;
  if (name == "coverage") return ExperimentKind::coverage;
  if (name == "ratio") return ExperimentKind::ratio;
  throw InvalidInputError("unknown experiment: " + name);
}

// Per-experiment defaults chosen to reproduce the study-scale runs; any flag
// the user passes overrides the matching field.
SimConfig experiment_defaults(ExperimentKind kind) {
  SimConfig config;
  switch (kind) {
    case ExperimentKind::type1:
      config.rank = 0;
      config.sigma_grid = {1.0};
      config.reps = 10000;
      break;
    case ExperimentKind::power:
      config.rank = 5;
      config.sigma_grid = {0.1, 0.2, 0.4, 0.5, 0.7, 1.0};
      config.reps = 1000;
      break;
    case ExperimentKind::coverage:
      config.rank = 5;
      config.sigma_grid = {0.1};
      config.alpha_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
      config.reps = 10000;
      break;
    case ExperimentKind::ratio:
      config.rank = 5;
      config.sigma_grid = {0.01, 0.1, 0.5, 1.0};
      config.reps = 1000;
      break;
  }
  return config;
}

ordered_json summary_json(const std::vector<SimSummaryRecord>& summary) {
  ordered_json arr = ordered_json::array();
  for (const auto& rec : summary) {
    arr.push_back({{"metric", rec.metric},
                   {"sigma", rec.sigma},
                   {"alpha", number_or_null(rec.alpha)},
                   {"k", rec.k},
                   {"kept", rec.kept},
                   {"events", rec.events},
                   {"value", number_or_null(rec.value)},
                   {"extra", number_or_null(rec.extra)}});
  }
  return arr;
}

ordered_json rows_json(const std::vector<SimRow>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& row : rows) {
    arr.push_back({{"rep", row.rep},
                   {"sigma", row.sigma},
                   {"alpha", number_or_null(row.alpha)},
                   {"r", row.r},
                   {"k", row.k},
                   {"p_selective", number_or_null(row.p_selective)},
                   {"p_unadjusted", number_or_null(row.p_unadjusted)},
                   {"pve_true", number_or_null(row.pve_true)},
                   {"ci_lo", number_or_null(row.ci_lo)},
                   {"ci_hi", number_or_null(row.ci_hi)},
                   {"covered", row.covered},
                   {"pve_mle", number_or_null(row.pve_mle)},
                   {"sample_pve", number_or_null(row.sample_pve)},
                   {"population_pve", number_or_null(row.population_pve)}});
  }
  return arr;
}

std::string maybe_number(double v) {
  return std::isnan(v) ? std::string() : format_number(v);
}

std::string render_rows_csv(const std::vector<SimRow>& rows) {
  std::ostringstream out;
  out << "rep,sigma,alpha,r,k,p_selective,p_unadjusted,pve_true,ci_lo,ci_hi,"
         "covered,pve_mle,sample_pve,population_pve\n";
  for (const auto& row : rows) {
    out << row.rep << ',' << format_number(row.sigma) << ','
        << maybe_number(row.alpha) << ',' << row.r << ',' << row.k << ','
        << maybe_number(row.p_selective) << ','
        << maybe_number(row.p_unadjusted) << ',' << maybe_number(row.pve_true)
        << ',' << maybe_number(row.ci_lo) << ',' << maybe_number(row.ci_hi)
        << ',' << (row.covered < 0 ? std::string() : std::to_string(row.covered))
        << ',' << maybe_number(row.pve_mle) << ','
        << maybe_number(row.sample_pve) << ','
        << maybe_number(row.population_pve) << "\n";
  }
  return out.str();
}

std::string render_summary_csv(const std::vector<SimSummaryRecord>& summary) {
  std::ostringstream out;
  out << "metric,sigma,alpha,k,kept,events,value,extra\n";
  for (const auto& rec : summary) {
    out << rec.metric << ',' << format_number(rec.sigma) << ','
        << maybe_number(rec.alpha) << ',' << rec.k << ',' << rec.kept << ','
        << rec.events << ',' << maybe_number(rec.value) << ','
        << maybe_number(rec.extra) << "\n";
  }
  return out.str();
}

int cmd_simulate(const SimulateOptions& opt) {
  if (opt.format != "json" && opt.format != "csv")
    throw InvalidInputError("--format must be json or csv");
  const ExperimentKind kind = parse_experiment(opt.experiment);
  const SimResult result = run_experiment(kind, opt.config);

  if (opt.format == "csv") {
    if (opt.output_path.empty())
      throw InvalidInputError(
          "--format csv needs --output; two files <output>_rows.csv and "
          "<output>_summary.csv are written");
    write_text(opt.output_path + "_rows.csv", render_rows_csv(result.rows));
    write_text(opt.output_path + "_summary.csv",
               render_summary_csv(result.summary));
    return 0;
  }

  ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["command"] = "simulate";
  out["experiment"] = opt.experiment;
  const auto& c = opt.config;
  out["config"] = {{"n", c.n},
                   {"p", c.p},
                   {"rank", c.rank},
                   {"sigma_grid", c.sigma_grid},
                   {"alpha_grid", c.alpha_grid},
                   {"rule", c.rule.kind == RuleKind::derivative ? "derivative"
                            : c.rule.kind == RuleKind::zg       ? "zg"
                                                                : "none"},
                   {"reps", c.reps},
                   {"alpha", c.alpha},
                   {"alpha_split", c.alpha_split},
                   {"c", c.c},
                   {"seed", c.seed},
                   {"sigma_mode", c.sigma_mode == SigmaMode::true_value
                                      ? "true"
                                      : "estimated"},
                   {"threads", c.threads}};
  out["summary"] = summary_json(result.summary);
  out["rows"] = rows_json(result.rows);
  write_text(opt.output_path, out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Selective inference for the proportion of variance explained by "
      "principal components"};
  app.require_subcommand(1);

  InferOptions iopt;
  CLI::App* infer =
      app.add_subcommand("infer", "Analyze one data matrix read from CSV");
  infer->add_option("--input", iopt.input_path, "Input CSV path")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_flag("--header", iopt.header, "Skip the first nonblank line");
  infer->add_option("--rule", iopt.rule_name, "Rank rule")
      ->check(CLI::IsMember({"derivative", "zg", "none"}))
      ->capture_default_str();
  infer->add_option("--alpha", iopt.alpha, "Total error budget")
      ->capture_default_str();
  infer
      ->add_option("--alpha-split", iopt.alpha_split,
                   "Fraction of alpha spent on the numerator interval")
      ->capture_default_str();
  infer->add_option("--c", iopt.c, "Thinning scale")->capture_default_str();
  CLI::Option* sigma_opt =
      infer->add_option("--sigma", iopt.sigma, "Known noise sd");
  CLI::Option* est_opt = infer->add_flag(
      "--estimate-sigma", iopt.estimate_sigma,
      "Estimate the noise variance from the spectrum");
  sigma_opt->excludes(est_opt);
  est_opt->excludes(sigma_opt);
  infer->add_flag("--center", iopt.center,
                  "Remove column means (drops one row of freedom)");
  infer->add_option("--seed", iopt.seed, "Thinning seed")
      ->capture_default_str();
  infer->add_option("--output", iopt.output_path,
                    "Report path (default: stdout)");
  infer->add_option("--format", iopt.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  SimulateOptions sopt;
  std::vector<double> sigma_grid;
  std::vector<double> alpha_grid;
  bool sim_estimate_sigma = false;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Run a Monte Carlo experiment");
  simulate
      ->add_option("experiment", sopt.experiment,
                   "type1 | power | coverage | ratio")
      ->required()
      ->check(CLI::IsMember({"type1", "power", "coverage", "ratio"}));
  CLI::Option* n_opt = simulate->add_option("--n", sopt.config.n, "Rows");
  CLI::Option* p_opt = simulate->add_option("--p", sopt.config.p, "Columns");
  CLI::Option* rank_opt =
      simulate->add_option("--rank", sopt.config.rank, "Mean-matrix rank");
  CLI::Option* sigma_grid_opt = simulate->add_option(
      "--sigma", sigma_grid, "Noise sd grid (repeat or space-separate)");
  CLI::Option* alpha_grid_opt = simulate->add_option(
      "--alphas", alpha_grid, "Coverage level grid");
  CLI::Option* reps_opt =
      simulate->add_option("--reps", sopt.config.reps, "Replicates");
  CLI::Option* alpha_opt =
      simulate->add_option("--alpha", sopt.config.alpha, "Test level");
  CLI::Option* split_opt = simulate->add_option(
      "--alpha-split", sopt.config.alpha_split, "Numerator share of alpha");
  CLI::Option* c_opt =
      simulate->add_option("--c", sopt.config.c, "Thinning scale");
  CLI::Option* rule_opt =
      simulate->add_option("--rule", sopt.rule_name, "Rank rule");
  simulate->add_flag("--estimate-sigma", sim_estimate_sigma,
                     "Use the spectrum-based noise estimate inside each "
                     "replicate");
  CLI::Option* seed_opt =
      simulate->add_option("--seed", sopt.config.seed, "Base seed");
  CLI::Option* threads_opt = simulate->add_option(
      "--threads", sopt.config.threads, "Worker count (0 = auto)");
  simulate->add_option("--output", sopt.output_path,
                       "Output path or stem (default: stdout for json)");
  simulate->add_option("--format", sopt.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (infer->parsed()) {
      iopt.sigma_given = sigma_opt->count() > 0;
      return cmd_infer(iopt);
    }

    const ExperimentKind kind = parse_experiment(sopt.experiment);
    SimConfig config = experiment_defaults(kind);
    if (n_opt->count()) config.n = sopt.config.n;
    if (p_opt->count()) config.p = sopt.config.p;
    if (rank_opt->count()) config.rank = sopt.config.rank;
    if (sigma_grid_opt->count()) config.sigma_grid = sigma_grid;
    if (alpha_grid_opt->count()) config.alpha_grid = alpha_grid;
    if (reps_opt->count()) config.reps = sopt.config.reps;
    if (alpha_opt->count()) config.alpha = sopt.config.alpha;
    if (split_opt->count()) config.alpha_split = sopt.config.alpha_split;
    if (c_opt->count()) config.c = sopt.config.c;
    if (rule_opt->count())
      config.rule = SelectionRule{parse_rule(sopt.rule_name)};
    if (sim_estimate_sigma) config.sigma_mode = SigmaMode::estimated;
    if (seed_opt->count()) config.seed = sopt.config.seed;
    if (threads_opt->count()) config.threads = sopt.config.threads;
    sopt.config = config;
    return cmd_simulate(sopt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
