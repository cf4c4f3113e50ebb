#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace doptlab {

// Dense row-major [t][s][a] table of reals.
class TsaTable {
 public:
  TsaTable() = default;
  TsaTable(int horizon, int num_states, int num_actions, double fill = 0.0)
      : horizon_(horizon),
        num_states_(num_states),
        num_actions_(num_actions),
        data_(static_cast<std::size_t>(horizon) * num_states * num_actions, fill) {}

  int horizon() const { return horizon_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }

  double operator()(int t, int s, int a) const { return data_[index(t, s, a)]; }
  double& operator()(int t, int s, int a) { return data_[index(t, s, a)]; }

  std::span<const double> row(int t, int s) const {
    return {data_.data() + index(t, s, 0), static_cast<std::size_t>(num_actions_)};
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const TsaTable& other) const {
    return horizon_ == other.horizon_ && num_states_ == other.num_states_ &&
           num_actions_ == other.num_actions_;
  }

  friend bool operator==(const TsaTable&, const TsaTable&) = default;

 private:
  std::size_t index(int t, int s, int a) const {
    assert(t >= 0 && t < horizon_ && s >= 0 && s < num_states_ && a >= 0 && a < num_actions_);
    return (static_cast<std::size_t>(t) * num_states_ + s) * num_actions_ + a;
  }

  int horizon_ = 0;
  int num_states_ = 0;
  int num_actions_ = 0;
  std::vector<double> data_;
};

// Dense row-major [t][s] table of reals.
class TsTable {
 public:
  TsTable() = default;
  TsTable(int horizon, int num_states, double fill = 0.0)
      : horizon_(horizon),
        num_states_(num_states),
        data_(static_cast<std::size_t>(horizon) * num_states, fill) {}

  int horizon() const { return horizon_; }
  int num_states() const { return num_states_; }

  double operator()(int t, int s) const { return data_[index(t, s)]; }
  double& operator()(int t, int s) { return data_[index(t, s)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  friend bool operator==(const TsTable&, const TsTable&) = default;

 private:
  std::size_t index(int t, int s) const {
    assert(t >= 0 && t < horizon_ && s >= 0 && s < num_states_);
    return static_cast<std::size_t>(t) * num_states_ + s;
  }

  int horizon_ = 0;
  int num_states_ = 0;
  std::vector<double> data_;
};

// Largest absolute elementwise difference; tables must have equal shape.
double max_abs_diff(const TsaTable& a, const TsaTable& b);
double max_abs_diff(const TsTable& a, const TsTable& b);

}  // namespace doptlab
