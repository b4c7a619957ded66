#pragma once

#include <Eigen/Core>
#include <vector>

namespace sddp {

// Supporting hyperplane of a stage value function: V(x) >= beta'x + alpha.
struct Cut {
  Eigen::VectorXd beta;
  double alpha = 0.0;
};

// Max-affine lower model of a cost-to-go function. Always holds at least one
// cut; the zero cut stands in for "no information yet". Cuts only append.
class ValueFunctionApprox {
 public:
  ValueFunctionApprox(int dim, std::vector<Cut> cuts);
  static ValueFunctionApprox zero(int dim);

  void append(Cut cut);
  double evaluate(const Eigen::VectorXd& x) const;

  int dim() const { return dim_; }
  const std::vector<Cut>& cuts() const { return cuts_; }

 private:
  int dim_;
  std::vector<Cut> cuts_;
};

// Value functions V_2 .. V_{T+1} of a T-stage problem; the terminal entry is
// by convention the zero function. Stage t's subproblem prices V_{t+1}.
class VfnSet {
 public:
  VfnSet() = default;
  // dims[t-1] is the action dimension of stage t; V_t lives on stage t-1's
  // action space, so V_{t+1} has dimension dims[t-1].
  static VfnSet zeros(const std::vector<int>& dims);

  int horizon() const { return static_cast<int>(v_.size()); }
  ValueFunctionApprox& at_stage(int t);              // V_t, 2 <= t <= T+1
  const ValueFunctionApprox& at_stage(int t) const;
  const ValueFunctionApprox& after_stage(int t) const { return at_stage(t + 1); }

  void push_back(ValueFunctionApprox v) { v_.push_back(std::move(v)); }

 private:
  std::vector<ValueFunctionApprox> v_;  // index t-2 holds V_t
};

}  // namespace sddp
