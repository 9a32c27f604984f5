#pragma once

// Domain types and elementary functionals over the probability simplex.
//
// Every type validates on construction and is immutable afterwards, so values
// can be shared freely across threads.

#include <Eigen/Dense>

#include <initializer_list>
#include <optional>
#include <string_view>
#include <variant>

#include "vattn/error.hpp"

namespace vattn {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute tolerance on |sum - 1| for a validated simplex point.
inline constexpr double kSimplexTolerance = 1e-12;
/// Larger deviation accepted (and corrected) by SimplexDistribution::renormalized.
inline constexpr double kRenormalizeTolerance = 1e-9;

/// One row of query-key logits.
class Scores {
 public:
  explicit Scores(Vector values);
  Scores(std::initializer_list<double> values);

  const Vector& values() const noexcept { return values_; }
  Index size() const noexcept { return values_.size(); }
  double operator[](Index j) const { return values_[j]; }

 private:
  Vector values_;
};

/// Nonnegative weights summing to one.
class SimplexDistribution {
 public:
  /// Strict: rejects any sum off by more than kSimplexTolerance.
  explicit SimplexDistribution(Vector weights);
  SimplexDistribution(std::initializer_list<double> weights);

  /// For ingested data: rescales when |sum - 1| < kRenormalizeTolerance.
  static SimplexDistribution renormalized(Vector weights);
  static SimplexDistribution uniform(Index m);

  const Vector& weights() const noexcept { return weights_; }
  Index size() const noexcept { return weights_.size(); }
  double operator[](Index j) const { return weights_[j]; }

  bool strictly_positive() const noexcept;
  /// Number of entries > 0.
  Index support_size() const noexcept;

 private:
  Vector weights_;
};

enum class RegularizerKind { Shannon, L2, Tsallis, ShannonPlusLinearPenalty, KLPrior };

std::string_view to_string(RegularizerKind kind) noexcept;

/// The penalty Omega(p) added to -<p, s>. Each kind carries exactly its own
/// parameters; the factories enforce their ranges.
class RegularizerSpec {
 public:
  struct Shannon {
    double temperature;
  };
  struct L2 {};
  struct Tsallis {
    double alpha;
  };
  /// Shannon plus gamma * sum_j p_j |i - j|, positions 1-based.
  struct ShannonPlusLinearPenalty {
    double temperature;
    double gamma;
    Index query_position;
  };
  struct KLPrior {
    double temperature;
    SimplexDistribution prior;
  };

  using Params = std::variant<Shannon, L2, Tsallis, ShannonPlusLinearPenalty, KLPrior>;

  static RegularizerSpec shannon(double temperature);
  static RegularizerSpec l2();
  static RegularizerSpec tsallis(double alpha);
  static RegularizerSpec linear_penalty(double temperature, double gamma, Index query_position);
  static RegularizerSpec kl_prior(double temperature, SimplexDistribution prior);

  RegularizerKind kind() const noexcept;
  const Params& params() const noexcept { return params_; }
  template <class T>
  const T& as() const {
    return std::get<T>(params_);
  }

  /// Temperature for the Shannon family; empty for L2 and Tsallis.
  std::optional<double> temperature() const noexcept;

  /// Throws InvalidArgument if the spec cannot be applied to m scores.
  void check_length(Index m) const;

 private:
  explicit RegularizerSpec(Params params) : params_(std::move(params)) {}
  Params params_;
};

/// Per-key marginal utilities u_j = -dL/dp_j.
class UtilityVector {
 public:
  explicit UtilityVector(Vector values);
  UtilityVector(std::initializer_list<double> values);

  const Vector& values() const noexcept { return values_; }
  Index size() const noexcept { return values_.size(); }

 private:
  Vector values_;
};

/// n queries and m keys sharing an inner dimension d, one vector per row.
class QueryKeyBatch {
 public:
  QueryKeyBatch(Matrix queries, Matrix keys);

  const Matrix& queries() const noexcept { return queries_; }
  const Matrix& keys() const noexcept { return keys_; }
  Index query_count() const noexcept { return queries_.rows(); }
  Index key_count() const noexcept { return keys_.rows(); }
  Index dim() const noexcept { return queries_.cols(); }

 private:
  Matrix queries_;
  Matrix keys_;
};

/// m value vectors of dimension d_v, one per row.
class ValueSet {
 public:
  explicit ValueSet(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  Index rows() const noexcept { return values_.rows(); }
  Index dim() const noexcept { return values_.cols(); }

 private:
  Matrix values_;
};

/// -sum p log p with 0 log 0 = 0.
double shannon_entropy(const SimplexDistribution& p);

/// sum p log(p/q). Throws if q has a zero entry or the lengths differ.
double kl_divergence(const SimplexDistribution& p, const SimplexDistribution& q);

/// Omega(p) for the given regularizer.
double regularizer_value(const SimplexDistribution& p, const RegularizerSpec& reg);

/// -<p, s> + Omega(p).
double objective_value(const SimplexDistribution& p, const Scores& s, const RegularizerSpec& reg);

namespace detail {

// Unchecked kernels over raw vectors, shared by the validated entry points
// and the inner loops of the oracles. Callers guarantee lengths match.
double entropy(const Eigen::Ref<const Vector>& p);
double regularizer(const Eigen::Ref<const Vector>& p, const RegularizerSpec& reg);
double objective(const Eigen::Ref<const Vector>& p, const Eigen::Ref<const Vector>& s,
                 const RegularizerSpec& reg);

bool all_finite(const Eigen::Ref<const Matrix>& x) noexcept;

}  // namespace detail

}  // namespace vattn
