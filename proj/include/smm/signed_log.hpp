#pragma once

#include <cmath>
#include <limits>

namespace smm {

// A signed quantity stored as (log|v|, sign). sign == 0 encodes exact zero.
struct SignedLogValue {
  double log_abs = -std::numeric_limits<double>::infinity();
  int sign = 0;
};

// Compensated (Neumaier) summation.
class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double result() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Streaming accumulator for sums of signed terms given in log form. Positive
// and negative magnitudes are accumulated in separate max-shifted buckets; the
// buckets are combined only at the end, so intermediate overflow/underflow
// cannot occur for terms representable in log space.
class SignedLogSum {
 public:
  void add(double log_abs, int sign) {
    if (sign == 0 || log_abs == -std::numeric_limits<double>::infinity()) return;
    if (sign > 0) {
      add_bucket(pos_max_, pos_sum_, log_abs);
    } else {
      add_bucket(neg_max_, neg_sum_, log_abs);
    }
  }

  // log of the positive / negative bucket totals (-inf when empty).
  double log_positive() const { return bucket_log(pos_max_, pos_sum_); }
  double log_negative() const { return bucket_log(neg_max_, neg_sum_); }

  // Exact signed combination, no cancellation clamping.
  SignedLogValue combined_raw() const {
    const double lp = log_positive();
    const double ln = log_negative();
    const double ninf = -std::numeric_limits<double>::infinity();
    if (lp == ninf && ln == ninf) return {ninf, 0};
    if (ln == ninf) return {lp, 1};
    if (lp == ninf) return {ln, -1};
    if (lp == ln) return {ninf, 0};
    if (lp > ln) return {lp + std::log1p(-std::exp(ln - lp)), 1};
    return {ln + std::log1p(-std::exp(lp - ln)), -1};
  }

  // Signed combination where a negative residual smaller than 1e-12 of the
  // positive bucket is treated as cancellation noise and clamped to zero.
  // Used wherever the true sum is known to be nonnegative (densities,
  // marginal evidence, CDF numerators).
  SignedLogValue combined_clamped() const {
    SignedLogValue v = combined_raw();
    if (v.sign < 0 && v.log_abs - log_positive() < kClampLog) {
      return {-std::numeric_limits<double>::infinity(), 0};
    }
    return v;
  }

  double value_raw() const {
    const SignedLogValue v = combined_raw();
    return v.sign * std::exp(v.log_abs);
  }

  double value_clamped() const {
    const SignedLogValue v = combined_clamped();
    if (v.sign <= 0) return 0.0;
    return std::exp(v.log_abs);
  }

 private:
  static constexpr double kClampLog = -27.631021115928547;  // log(1e-12)

  static void add_bucket(double& max, double& sum, double l) {
    if (l <= max) {
      sum += std::exp(l - max);
    } else {
      sum = sum * std::exp(max - l) + 1.0;
      max = l;
    }
  }

  static double bucket_log(double max, double sum) {
    if (sum <= 0.0) return -std::numeric_limits<double>::infinity();
    return max + std::log(sum);
  }

  double pos_max_ = -std::numeric_limits<double>::infinity();
  double pos_sum_ = 0.0;
  double neg_max_ = -std::numeric_limits<double>::infinity();
  double neg_sum_ = 0.0;
};

}  // namespace smm
