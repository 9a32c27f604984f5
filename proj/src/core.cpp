#include "vattn/core.hpp"

#include <cmath>
#include <string>

namespace vattn {
namespace {

Vector to_vector(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index j = 0;
  for (double x : values) v[j++] = x;
  return v;
}

void require_positive_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("temperature must be a finite positive number, got " +
                          std::to_string(tau));
  }
}

void check_simplex_shape(const Vector& w) {
  if (w.size() < 1) throw InvalidArgument("simplex distribution must be non-empty");
  if (!detail::all_finite(w)) throw InvalidArgument("simplex distribution has non-finite entries");
  if ((w.array() < 0.0).any()) throw InvalidArgument("simplex distribution has negative entries");
}

}  // namespace

bool detail::all_finite(const Eigen::Ref<const Matrix>& x) noexcept {
  return x.allFinite();
}

// --- Scores -----------------------------------------------------------------

Scores::Scores(Vector values) : values_(std::move(values)) {
  if (values_.size() < 1) throw InvalidArgument("scores must be non-empty");
  if (!detail::all_finite(values_)) throw InvalidArgument("scores contain NaN or Inf");
}

Scores::Scores(std::initializer_list<double> values) : Scores(to_vector(values)) {}

// --- SimplexDistribution ----------------------------------------------------

SimplexDistribution::SimplexDistribution(Vector weights) : weights_(std::move(weights)) {
  check_simplex_shape(weights_);
  const double sum = weights_.sum();
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw InvalidArgument("simplex weights sum to " + std::to_string(sum) + ", not 1");
  }
}

SimplexDistribution::SimplexDistribution(std::initializer_list<double> weights)
    : SimplexDistribution(to_vector(weights)) {}

SimplexDistribution SimplexDistribution::renormalized(Vector weights) {
  check_simplex_shape(weights);
  const double sum = weights.sum();
  if (std::abs(sum - 1.0) >= kRenormalizeTolerance) {
    throw InvalidArgument("weights sum to " + std::to_string(sum) +
                          ", too far from 1 to renormalize");
  }
  weights /= sum;
  return SimplexDistribution(std::move(weights));
}

SimplexDistribution SimplexDistribution::uniform(Index m) {
  if (m < 1) throw InvalidArgument("uniform distribution needs m >= 1");
  return SimplexDistribution(Vector::Constant(m, 1.0 / static_cast<double>(m)));
}

bool SimplexDistribution::strictly_positive() const noexcept {
  return (weights_.array() > 0.0).all();
}

Index SimplexDistribution::support_size() const noexcept {
  return (weights_.array() > 0.0).count();
}

// --- RegularizerSpec --------------------------------------------------------

std::string_view to_string(RegularizerKind kind) noexcept {
  switch (kind) {
    case RegularizerKind::Shannon: return "shannon";
    case RegularizerKind::L2: return "l2";
    case RegularizerKind::Tsallis: return "tsallis";
    case RegularizerKind::ShannonPlusLinearPenalty: return "alibi";
    case RegularizerKind::KLPrior: return "kl";
  }
  return "unknown";
}

RegularizerSpec RegularizerSpec::shannon(double temperature) {
  require_positive_temperature(temperature);
  return RegularizerSpec(Shannon{temperature});
}

RegularizerSpec RegularizerSpec::l2() { return RegularizerSpec(L2{}); }

RegularizerSpec RegularizerSpec::tsallis(double alpha) {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("tsallis alpha must be > 1, got " + std::to_string(alpha));
  }
  return RegularizerSpec(Tsallis{alpha});
}

RegularizerSpec RegularizerSpec::linear_penalty(double temperature, double gamma,
                                                Index query_position) {
  require_positive_temperature(temperature);
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("linear penalty gamma must be >= 0, got " + std::to_string(gamma));
  }
  if (query_position < 1) {
    throw InvalidArgument("query position is 1-based, got " + std::to_string(query_position));
  }
  return RegularizerSpec(ShannonPlusLinearPenalty{temperature, gamma, query_position});
}

RegularizerSpec RegularizerSpec::kl_prior(double temperature, SimplexDistribution prior) {
  require_positive_temperature(temperature);
  if (!prior.strictly_positive()) {
    throw InvalidArgument("KL prior must be strictly positive");
  }
  return RegularizerSpec(KLPrior{temperature, std::move(prior)});
}

RegularizerKind RegularizerSpec::kind() const noexcept {
  return static_cast<RegularizerKind>(params_.index());
}

std::optional<double> RegularizerSpec::temperature() const noexcept {
  switch (kind()) {
    case RegularizerKind::Shannon: return as<Shannon>().temperature;
    case RegularizerKind::ShannonPlusLinearPenalty:
      return as<ShannonPlusLinearPenalty>().temperature;
    case RegularizerKind::KLPrior: return as<KLPrior>().temperature;
    default: return std::nullopt;
  }
}

void RegularizerSpec::check_length(Index m) const {
  if (m < 1) throw InvalidArgument("regularizer applied to an empty vector");
  if (kind() == RegularizerKind::KLPrior && as<KLPrior>().prior.size() != m) {
    throw InvalidArgument("prior has length " + std::to_string(as<KLPrior>().prior.size()) +
                          " but scores have length " + std::to_string(m));
  }
}

// --- UtilityVector / QueryKeyBatch / ValueSet -------------------------------

UtilityVector::UtilityVector(Vector values) : values_(std::move(values)) {
  if (!detail::all_finite(values_)) throw InvalidArgument("utilities contain NaN or Inf");
}

UtilityVector::UtilityVector(std::initializer_list<double> values)
    : UtilityVector(to_vector(values)) {}

QueryKeyBatch::QueryKeyBatch(Matrix queries, Matrix keys)
    : queries_(std::move(queries)), keys_(std::move(keys)) {
  if (queries_.cols() < 1 || queries_.cols() != keys_.cols()) {
    throw InvalidArgument("queries and keys must share an inner dimension d >= 1");
  }
  if (keys_.rows() < 1) throw InvalidArgument("batch needs at least one key");
  if (!detail::all_finite(queries_) || !detail::all_finite(keys_)) {
    throw InvalidArgument("query/key batch contains NaN or Inf");
  }
}

ValueSet::ValueSet(Matrix values) : values_(std::move(values)) {
  if (!detail::all_finite(values_)) throw InvalidArgument("values contain NaN or Inf");
}

// --- functionals ------------------------------------------------------------

double detail::entropy(const Eigen::Ref<const Vector>& p) {
  double h = 0.0;
  for (Index j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) continue;  // 0 log 0 = 0
    h -= p[j] * std::log(p[j]);
  }
  return h;
}

double detail::regularizer(const Eigen::Ref<const Vector>& p, const RegularizerSpec& reg) {
  using R = RegularizerSpec;
  switch (reg.kind()) {
    case RegularizerKind::Shannon:
      return -reg.as<R::Shannon>().temperature * entropy(p);
    case RegularizerKind::L2:
      return 0.5 * p.squaredNorm();
    case RegularizerKind::Tsallis: {
      const double a = reg.as<R::Tsallis>().alpha;
      double acc = 0.0;
      for (Index j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) acc += std::pow(p[j], a) - p[j];
      }
      return acc / (a * (a - 1.0));
    }
    case RegularizerKind::ShannonPlusLinearPenalty: {
      const auto& lp = reg.as<R::ShannonPlusLinearPenalty>();
      double penalty = 0.0;
      for (Index j = 0; j < p.size(); ++j) {
        penalty += p[j] * static_cast<double>(std::abs(lp.query_position - (j + 1)));
      }
      return -lp.temperature * entropy(p) + lp.gamma * penalty;
    }
    case RegularizerKind::KLPrior: {
      const auto& kl = reg.as<R::KLPrior>();
      const Vector& prior = kl.prior.weights();
      double acc = 0.0;
      for (Index j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) acc += p[j] * (std::log(p[j]) - std::log(prior[j]));
      }
      return kl.temperature * acc;
    }
  }
  return 0.0;
}

double detail::objective(const Eigen::Ref<const Vector>& p, const Eigen::Ref<const Vector>& s,
                         const RegularizerSpec& reg) {
  return -p.dot(s) + regularizer(p, reg);
}

double shannon_entropy(const SimplexDistribution& p) { return detail::entropy(p.weights()); }

double kl_divergence(const SimplexDistribution& p, const SimplexDistribution& q) {
  if (p.size() != q.size()) throw InvalidArgument("kl_divergence: length mismatch");
  if (!q.strictly_positive()) {
    throw InvalidArgument("kl_divergence: reference distribution has a zero entry");
  }
  double acc = 0.0;
  for (Index j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) acc += p[j] * std::log(p[j] / q[j]);
  }
  return acc;
}

double regularizer_value(const SimplexDistribution& p, const RegularizerSpec& reg) {
  reg.check_length(p.size());
  return detail::regularizer(p.weights(), reg);
}

double objective_value(const SimplexDistribution& p, const Scores& s, const RegularizerSpec& reg) {
  if (p.size() != s.size()) throw InvalidArgument("objective_value: length mismatch");
  reg.check_length(p.size());
  return detail::objective(p.weights(), s.values(), reg);
}

}  // namespace vattn
