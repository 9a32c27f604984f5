#include "vattn/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "vattn/gradient.hpp"
#include "vattn/solvers.hpp"
#include "vattn/transport.hpp"

namespace vattn::cli {
namespace {

using nlohmann::json;

// Malformed input document (exit 2).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid flag or flag combination (exit 3).
struct FlagError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Temperatures below this get scaled finite-difference steps in gradcheck.
constexpr double kSmallTemperature = 1e-4;

// --- JSON helpers ---------------------------------------------------------------

json read_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

Vector to_vector(const json& node, const std::string& key) {
  if (!node.is_array()) throw InputError("'" + key + "' must be an array of numbers");
  Vector v(static_cast<Index>(node.size()));
  for (std::size_t j = 0; j < node.size(); ++j) {
    if (!node[j].is_number()) throw InputError("'" + key + "' must contain only numbers");
    v[static_cast<Index>(j)] = node[j].get<double>();
  }
  return v;
}

Matrix to_matrix(const json& node, const std::string& key) {
  if (!node.is_array() || node.empty()) {
    throw InputError("'" + key + "' must be a non-empty array of rows");
  }
  const std::size_t cols = node[0].is_array() ? node[0].size() : 0;
  Matrix m(static_cast<Index>(node.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < node.size(); ++i) {
    const Vector row = to_vector(node[i], key);
    if (static_cast<std::size_t>(row.size()) != cols) {
      throw InputError("'" + key + "' rows have unequal lengths");
    }
    m.row(static_cast<Index>(i)) = row.transpose();
  }
  return m;
}

std::optional<Vector> optional_vector(const json& doc, const std::string& key) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  return to_vector(doc[key], key);
}

std::optional<double> optional_number(const json& node, const std::string& key) {
  if (!node.contains(key) || node[key].is_null()) return std::nullopt;
  if (!node[key].is_number()) throw InputError("'" + key + "' must be a number");
  return node[key].get<double>();
}

Scores read_scores(const json& doc) {
  if (!doc.is_object() || !doc.contains("scores")) {
    throw InputError("input document needs a 'scores' array");
  }
  try {
    return Scores(to_vector(doc["scores"], "scores"));
  } catch (const InvalidArgument& e) {
    throw InputError(e.what());
  }
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index j = 0; j < v.size(); ++j) a.push_back(v[j]);
  return a;
}

json matrix_json(const Matrix& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

void dump_node(const json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        break;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      break;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        break;
      }
      out += "[\n";
      for (std::size_t k = 0; k < j.size(); ++k) {
        out += pad;
        dump_node(j[k], out, indent + 2);
        out += k + 1 < j.size() ? ",\n" : "\n";
      }
      out += close + "]";
      break;
    }
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      std::size_t k = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++k) {
        out += pad + json(it.key()).dump() + ": ";
        dump_node(it.value(), out, indent + 2);
        out += k + 1 < j.size() ? ",\n" : "\n";
      }
      out += close + "}";
      break;
    }
    default:
      out += j.dump();
  }
}

// --- regularizer flags ------------------------------------------------------------

struct RegFlags {
  std::string reg;
  std::optional<double> tau;
  std::optional<double> alpha;
  std::optional<double> gamma;
  std::optional<long long> pos;
  std::optional<std::string> prior;
};

SimplexDistribution load_prior(const std::string& spec, Index m) {
  if (spec == "uniform") return SimplexDistribution::uniform(m);
  json doc = read_document(spec);
  const json& node = doc.is_object() && doc.contains("prior") ? doc["prior"] : doc;
  try {
    return SimplexDistribution::renormalized(to_vector(node, "prior"));
  } catch (const InvalidArgument& e) {
    throw FlagError(std::string("prior: ") + e.what());
  }
}

// Parameters come from the flag if given, else the document's "regularizer"
// object (or top-level "temperature" for tau). A flag that the chosen kind
// does not use is an error.
RegularizerSpec build_regularizer(const RegFlags& f, const json& doc, Index m) {
  const json empty = json::object();
  const json& file = doc.contains("regularizer") ? doc["regularizer"] : empty;
  if (!file.is_object()) throw InputError("'regularizer' must be an object");

  std::string kind = f.reg;
  if (kind.empty()) {
    if (file.contains("kind")) {
      if (!file["kind"].is_string()) throw InputError("'regularizer.kind' must be a string");
      kind = file["kind"].get<std::string>();
    } else {
      kind = "shannon";
    }
  }

  const bool uses_tau = kind == "shannon" || kind == "alibi" || kind == "kl";
  auto reject = [&](bool given, const char* flag) {
    if (given) throw FlagError(std::string(flag) + " does not apply to --reg " + kind);
  };
  reject(f.tau && !uses_tau, "--tau");
  reject(f.alpha.has_value() && kind != "tsallis", "--alpha");
  reject(f.gamma.has_value() && kind != "alibi", "--gamma");
  reject(f.pos.has_value() && kind != "alibi", "--pos");
  reject(f.prior.has_value() && kind != "kl", "--prior");

  auto tau = [&]() {
    if (f.tau) return *f.tau;
    if (auto t = optional_number(file, "temperature")) return *t;
    if (auto t = optional_number(doc, "temperature")) return *t;
    return 1.0;
  };

  try {
    if (kind == "shannon") return RegularizerSpec::shannon(tau());
    if (kind == "l2") return RegularizerSpec::l2();
    if (kind == "tsallis") {
      auto alpha = f.alpha ? f.alpha : optional_number(file, "alpha");
      if (!alpha) throw FlagError("--reg tsallis needs --alpha");
      return RegularizerSpec::tsallis(*alpha);
    }
    if (kind == "alibi") {
      auto gamma = f.gamma ? f.gamma : optional_number(file, "gamma");
      std::optional<long long> pos = f.pos;
      if (!pos) {
        if (auto p = optional_number(file, "query_position")) pos = std::llround(*p);
      }
      if (!gamma || !pos) throw FlagError("--reg alibi needs --gamma and --pos");
      return RegularizerSpec::linear_penalty(tau(), *gamma, static_cast<Index>(*pos));
    }
    if (kind == "kl") {
      std::optional<SimplexDistribution> prior;
      if (f.prior) {
        prior = load_prior(*f.prior, m);
      } else if (file.contains("prior")) {
        if (file["prior"].is_string()) {
          prior = load_prior(file["prior"].get<std::string>(), m);
        } else {
          prior = SimplexDistribution::renormalized(to_vector(file["prior"], "prior"));
        }
      }
      if (!prior) throw FlagError("--reg kl needs --prior <path|uniform>");
      if (prior->size() != m) {
        throw FlagError("prior has " + std::to_string(prior->size()) + " entries, scores have " +
                        std::to_string(m));
      }
      return RegularizerSpec::kl_prior(tau(), std::move(*prior));
    }
  } catch (const InvalidArgument& e) {
    throw FlagError(e.what());
  }
  throw FlagError("unknown regularizer '" + kind + "' (expected shannon|l2|tsallis|alibi|kl)");
}

json regularizer_json(const RegularizerSpec& reg) {
  using R = RegularizerSpec;
  json j;
  j["kind"] = std::string(to_string(reg.kind()));
  switch (reg.kind()) {
    case RegularizerKind::Shannon: j["temperature"] = reg.as<R::Shannon>().temperature; break;
    case RegularizerKind::L2: break;
    case RegularizerKind::Tsallis: j["alpha"] = reg.as<R::Tsallis>().alpha; break;
    case RegularizerKind::ShannonPlusLinearPenalty: {
      const auto& lp = reg.as<R::ShannonPlusLinearPenalty>();
      j["temperature"] = lp.temperature;
      j["gamma"] = lp.gamma;
      j["query_position"] = lp.query_position;
      break;
    }
    case RegularizerKind::KLPrior: {
      const auto& kl = reg.as<R::KLPrior>();
      j["temperature"] = kl.temperature;
      j["prior"] = vector_json(kl.prior.weights());
      break;
    }
  }
  return j;
}

double tolerance_scale() {
  const char* raw = std::getenv("VATTN_TOL_SCALE");
  if (raw == nullptr || *raw == '\0') return 1.0;
  char* end = nullptr;
  const double v = std::strtod(raw, &end);
  if (end == raw || *end != '\0' || !(v > 0.0) || !std::isfinite(v)) {
    throw FlagError(std::string("VATTN_TOL_SCALE must be a positive number, got '") + raw + "'");
  }
  return v;
}

void emit(const json& doc, const std::string& out_path, std::ostream& out) {
  const std::string text = dump_json(doc) + "\n";
  if (out_path.empty() || out_path == "-") {
    out << text;
    return;
  }
  std::ofstream file(out_path);
  if (!file) throw std::runtime_error("cannot write '" + out_path + "'");
  file << text;
}

// --- subcommands ------------------------------------------------------------------

int cmd_attn(const std::string& input, const RegFlags& flags, const std::string& out_path,
             std::ostream& out) {
  const json doc = read_document(input);
  const Scores s = read_scores(doc);
  const RegularizerSpec reg = build_regularizer(flags, doc, s.size());
  const solvers::SolveResult r = solvers::solve(s, reg);

  json result;
  result["regularizer"] = regularizer_json(reg);
  result["distribution"] = vector_json(r.distribution.weights());
  result["support_size"] = r.support_size;
  result["potential"] = r.potential ? json(*r.potential) : json(nullptr);
  result["objective"] = objective_value(r.distribution, s, reg);
  emit(result, out_path, out);
  return kExitOk;
}

int cmd_verify(const std::string& suite, const verify::Options& opt, const std::string& out_path,
               std::ostream& out) {
  const auto& names = verify::suite_names();
  if (suite != "all" && std::find(names.begin(), names.end(), suite) == names.end()) {
    throw FlagError("unknown suite '" + suite +
                    "' (expected closed-forms|oracle-equivalence|gradient-identities|duality|"
                    "transport|all)");
  }
  const verify::RunReport report = verify::run_suite(suite, opt);
  emit(report_to_json(report), out_path, out);
  return report.passed() ? kExitOk : kExitFailure;
}

struct GradcheckInstance {
  Scores scores;
  double tau;
  std::optional<UtilityVector> utilities;
};

GradcheckInstance read_gradcheck(const json& doc, std::optional<double> tau_flag) {
  GradcheckInstance g{read_scores(doc), 1.0, std::nullopt};
  if (tau_flag) {
    g.tau = *tau_flag;
    if (!(g.tau > 0.0) || !std::isfinite(g.tau)) throw FlagError("--tau must be positive");
  } else if (auto t = optional_number(doc, "temperature")) {
    g.tau = *t;
    if (!(g.tau > 0.0) || !std::isfinite(g.tau)) throw InputError("'temperature' must be positive");
  }
  const Index m = g.scores.size();
  try {
    if (auto u = optional_vector(doc, "utilities")) {
      if (u->size() != m) throw InputError("'utilities' length differs from 'scores'");
      g.utilities = UtilityVector(*u);
    } else if (doc.contains("context_gradient") && doc.contains("values")) {
      const ValueSet values(to_matrix(doc["values"], "values"));
      if (values.rows() != m) throw InputError("'values' needs one row per score");
      g.utilities = gradient::marginal_utility(to_vector(doc["context_gradient"], "context_gradient"),
                                               values);
    }
  } catch (const InvalidArgument& e) {
    throw InputError(e.what());
  }
  return g;
}

int cmd_gradcheck(const std::string& input, std::optional<double> tau_flag,
                  const std::string& out_path, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const GradcheckInstance g = read_gradcheck(read_document(input), tau_flag);
  const double scale = tolerance_scale();

  // The Hessian of lse grows like 1/tau; below kSmallTemperature the steps
  // shrink and the tolerances widen by the same ratio.
  const bool small = g.tau < kSmallTemperature;
  const double ratio = small ? kSmallTemperature / g.tau : 1.0;
  const double h_grad = 1e-5 / ratio;
  const double h_hess = 1e-4 / ratio;

  verify::RunReport report;
  report.suite = "gradcheck";
  report.trials = 1;
  auto record = [&](std::string name, double tolerance, auto&& compute) {
    verify::CheckResult c;
    c.name = std::move(name);
    c.tolerance = tolerance * scale;
    try {
      c.residual = compute();
    } catch (const std::exception& e) {
      c.residual = std::numeric_limits<double>::infinity();
      report.notes.push_back(c.name + ": " + e.what());
    }
    c.cases_run = 1;
    c.passed = c.residual <= c.tolerance;
    c.cases_passed = c.passed ? 1 : 0;
    report.add(std::move(c));
  };

  const Scores& s = g.scores;
  const double tau = g.tau;
  record("lse_gradient_finite_difference", 1e-7 * ratio,
         [&] { return gradient::lse_gradient_check(s, tau, h_grad); });
  record("envelope_finite_difference", 1e-7 * ratio,
         [&] { return gradient::envelope_check(s, tau, h_grad); });
  record("lse_hessian_finite_difference", 1e-6 * ratio,
         [&] { return gradient::lse_hessian_check(s, tau, h_hess); });

  if (g.utilities) {
    const UtilityVector& u = *g.utilities;
    const SimplexDistribution p = solvers::softmax(s, tau).distribution;
    record("chain_rule_equals_advantage", 1e-12 * ratio, [&] {
      return (gradient::chain_rule_gradient(p, u, tau) -
              gradient::advantage_gradient(p, u, tau).score_gradient)
          .lpNorm<Eigen::Infinity>();
    });
    record("natural_gradient_identity", 1e-12 * ratio,
           [&] { return gradient::natural_gradient_identity_check(p, u, tau); });
    record("loss_gradient_finite_difference", 1e-7 * ratio, [&] {
      // Linear loss with dL/dp = -u.
      const Vector fd = gradient::finite_difference_gradient(
          [&](const Vector& x) {
            return -u.values().dot(solvers::softmax(Scores(x), tau).distribution.weights());
          },
          s.values(), h_grad);
      return (fd - gradient::advantage_gradient(p, u, tau).score_gradient)
          .lpNorm<Eigen::Infinity>();
    });
  }

  json doc = report_to_json(report);
  json adjustment;
  adjustment["small_temperature_regime"] = small;
  adjustment["temperature"] = tau;
  adjustment["gradient_step"] = h_grad;
  adjustment["hessian_step"] = h_hess;
  adjustment["tolerance_widening"] = ratio;
  doc["adjustment"] = adjustment;
  if (small) {
    doc["notes"].push_back("temperature " + std::to_string(tau) + " < 1e-4: finite-difference "
                           "steps scaled down and tolerances widened by " +
                           std::to_string(ratio) + "; expect degraded accuracy");
  }
  doc["wall_time_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  emit(doc, out_path, out);
  return report.passed() ? kExitOk : kExitFailure;
}

int cmd_transport(const std::string& input, std::optional<double> tau_flag, bool with_oracle,
                  const std::string& out_path, std::ostream& out) {
  const json doc = read_document(input);
  if (!doc.is_object() || !doc.contains("queries") || !doc.contains("keys")) {
    throw InputError("transport input needs 'queries' and 'keys' matrices");
  }
  std::optional<QueryKeyBatch> batch;
  std::optional<ValueSet> values;
  try {
    batch.emplace(to_matrix(doc["queries"], "queries"), to_matrix(doc["keys"], "keys"));
    if (doc.contains("values")) values.emplace(to_matrix(doc["values"], "values"));
  } catch (const InvalidArgument& e) {
    throw InputError(e.what());
  }
  if (values && values->rows() != batch->key_count()) {
    throw InputError("'values' needs one row per key");
  }

  double tau = std::sqrt(static_cast<double>(batch->dim()));
  if (tau_flag) {
    tau = *tau_flag;
  } else if (auto t = optional_number(doc, "temperature")) {
    tau = *t;
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw FlagError("temperature must be positive");

  const transport::TransportPlan plan = transport::attention_matrix(*batch, tau);
  json result;
  result["temperature"] = tau;
  result["plan"] = matrix_json(plan.entries());
  result["objective"] =
      transport::eot_matrix_objective(plan, transport::cost_matrix(*batch), tau);
  if (values) result["context"] = matrix_json(transport::context(plan, *values));

  int code = kExitOk;
  if (with_oracle) {
    json o;
    try {
      const transport::TransportPlan solved = transport::solve_full_eot(*batch, tau);
      o["converged"] = true;
      o["plan"] = matrix_json(solved.entries());
      o["max_deviation"] = (solved.entries() - plan.entries()).lpNorm<Eigen::Infinity>();
    } catch (const ConvergenceFailure& e) {
      o["converged"] = false;
      o["failing_row"] = e.row();
      code = kExitFailure;
    }
    result["oracle"] = o;
  }
  emit(result, out_path, out);
  return code;
}

}  // namespace

json report_to_json(const verify::RunReport& report) {
  json j;
  j["suite"] = report.suite;
  j["seed"] = report.seed;
  j["trials"] = report.trials;
  j["cases_run"] = report.cases_run;
  j["cases_passed"] = report.cases_passed;
  j["max_residual"] = report.max_residual;
  j["passed"] = report.passed();
  j["wall_time_ms"] = report.wall_time_ms;
  json checks = json::array();
  for (const auto& c : report.per_check) {
    checks.push_back({{"name", c.name},
                      {"residual", c.residual},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed},
                      {"cases_run", c.cases_run},
                      {"cases_passed", c.cases_passed}});
  }
  j["per_check"] = checks;
  j["notes"] = report.notes;
  if (!report.suites.empty()) {
    json subs = json::array();
    for (const auto& s : report.suites) subs.push_back(report_to_json(s));
    j["suites"] = subs;
  }
  return j;
}

std::string dump_json(const json& doc) {
  std::string out;
  dump_node(doc, out, 0);
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention mechanisms as regularized optimal transport, with verification suites",
               "vattn"};
  app.require_subcommand(1);

  std::string out_path;
  RegFlags reg;
  std::string input;

  auto* attn = app.add_subcommand("attn", "Solve one score vector under a regularizer");
  attn->add_option("input", input, "JSON document with 'scores'")->required();
  attn->add_option("--reg", reg.reg, "shannon|l2|tsallis|alibi|kl");
  attn->add_option("--tau", reg.tau, "temperature (Shannon family)");
  attn->add_option("--alpha", reg.alpha, "Tsallis alpha > 1");
  attn->add_option("--gamma", reg.gamma, "ALiBi penalty >= 0");
  attn->add_option("--pos", reg.pos, "ALiBi query position (1-based)");
  attn->add_option("--prior", reg.prior, "prior file or 'uniform'");
  attn->add_option("--out", out_path, "output path (default stdout)");

  std::string suite;
  verify::Options vopt;
  auto* ver = app.add_subcommand("verify", "Run a randomized verification suite");
  ver->add_option("suite", suite, "closed-forms|oracle-equivalence|gradient-identities|duality|transport|all")
      ->required();
  ver->add_option("--seed", vopt.seed, "RNG seed");
  ver->add_option("--trials", vopt.trials, "trials per check");
  ver->add_option("--jobs", vopt.jobs, "worker threads");
  ver->add_option("--out", out_path, "output path (default stdout)");

  std::optional<double> tau_flag;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference certification of one instance");
  grad->add_option("input", input, "JSON document with 'scores'")->required();
  grad->add_option("--tau", tau_flag, "temperature (overrides the document)");
  grad->add_option("--out", out_path, "output path (default stdout)");

  bool with_oracle = false;
  auto* tr = app.add_subcommand("transport", "Attention matrix of a query/key batch");
  tr->add_option("input", input, "JSON document with 'queries' and 'keys'")->required();
  tr->add_option("--tau", tau_flag, "temperature (default sqrt(d))");
  tr->add_flag("--oracle", with_oracle, "also solve every row iteratively and compare");
  tr->add_option("--out", out_path, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitBadFlags;
  }

  try {
    if (*attn) return cmd_attn(input, reg, out_path, out);
    if (*ver) {
      if (vopt.trials < 1 || vopt.jobs < 1) throw FlagError("--trials and --jobs must be >= 1");
      vopt.tolerance_scale = tolerance_scale();
      return cmd_verify(suite, vopt, out_path, out);
    }
    if (*grad) return cmd_gradcheck(input, tau_flag, out_path, out);
    if (*tr) return cmd_transport(input, tau_flag, with_oracle, out_path, out);
  } catch (const InputError& e) {
    err << "vattn: malformed input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const FlagError& e) {
    err << "vattn: invalid flags: " << e.what() << "\n";
    return kExitBadFlags;
  } catch (const InvalidArgument& e) {
    err << "vattn: invalid input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    err << "vattn: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitBadFlags;
}

}  // namespace vattn::cli
