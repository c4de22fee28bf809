#pragma once

namespace ergodic {

// Neumaier's variant of Kahan summation: also exact when the addend is larger
// than the running sum.
class CompensatedSum {
 public:
  CompensatedSum() = default;
  explicit CompensatedSum(double initial) : sum_(initial) {}

  void add(double v) noexcept {
    const double t = sum_ + v;
    if ((sum_ < 0 ? -sum_ : sum_) >= (v < 0 ? -v : v)) {
      compensation_ += (sum_ - t) + v;
    } else {
      compensation_ += (v - t) + sum_;
    }
    sum_ = t;
  }

  CompensatedSum& operator+=(double v) noexcept {
    add(v);
    return *this;
  }

  double value() const noexcept { return sum_ + compensation_; }

  friend bool operator==(const CompensatedSum&, const CompensatedSum&) = default;

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace ergodic
