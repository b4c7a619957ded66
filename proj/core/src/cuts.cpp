#include "sddp/cuts.hpp"

#include <limits>
#include <stdexcept>

namespace sddp {

ValueFunctionApprox::ValueFunctionApprox(int dim, std::vector<Cut> cuts)
    : dim_(dim), cuts_(std::move(cuts)) {
  if (dim <= 0) throw std::invalid_argument("ValueFunctionApprox: dimension must be positive");
  if (cuts_.empty()) throw std::invalid_argument("ValueFunctionApprox: needs at least one cut");
  for (const Cut& c : cuts_) {
    if (c.beta.size() != dim || !c.beta.allFinite() || !std::isfinite(c.alpha))
      throw std::invalid_argument("ValueFunctionApprox: malformed cut");
  }
}

ValueFunctionApprox ValueFunctionApprox::zero(int dim) {
  return ValueFunctionApprox(dim, {Cut{Eigen::VectorXd::Zero(dim), 0.0}});
}

void ValueFunctionApprox::append(Cut cut) {
  if (cut.beta.size() != dim_ || !cut.beta.allFinite() || !std::isfinite(cut.alpha))
    throw std::invalid_argument("ValueFunctionApprox: malformed cut");
  cuts_.push_back(std::move(cut));
}

double ValueFunctionApprox::evaluate(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw std::invalid_argument("ValueFunctionApprox: dimension mismatch");
  double best = -std::numeric_limits<double>::infinity();
  for (const Cut& c : cuts_) best = std::max(best, c.beta.dot(x) + c.alpha);
  return best;
}

VfnSet VfnSet::zeros(const std::vector<int>& dims) {
  VfnSet s;
  for (int d : dims) s.v_.push_back(ValueFunctionApprox::zero(d));
  return s;
}

ValueFunctionApprox& VfnSet::at_stage(int t) {
  const int idx = t - 2;
  if (idx < 0 || idx >= static_cast<int>(v_.size()))
    throw std::invalid_argument("VfnSet: stage out of range");
  return v_[idx];
}

const ValueFunctionApprox& VfnSet::at_stage(int t) const {
  return const_cast<VfnSet*>(this)->at_stage(t);
}

}  // namespace sddp
