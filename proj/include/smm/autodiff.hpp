#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace smm::ad {

using NodeId = std::int32_t;

// Eager-forward scalar tape. Values are computed at node creation; a single
// reverse sweep accumulates adjoints. The primitive set is add/sub/neg/mul/
// div/exp/log/square/sqrt plus the Gaussian log-pdf, the standard normal CDF,
// and an "external" node that carries a caller-supplied local gradient (used
// for black-box target log-densities).
class Tape {
 public:
  NodeId constant(double v);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId square(NodeId a);
  NodeId sqrt(NodeId a);
  // log N(x; mu, exp(log_sigma)^2); all three arguments differentiable.
  NodeId gauss_log_pdf(NodeId x, NodeId mu, NodeId log_sigma);
  NodeId normal_cdf(NodeId z);
  // Scalar with caller-supplied value and partial derivatives w.r.t. args.
  NodeId external(std::span<const NodeId> args, double value, std::span<const double> partials);

  // Convenience: a + c, a * c with a constant folded into the node.
  NodeId add_const(NodeId a, double c);
  NodeId mul_const(NodeId a, double c);

  double value(NodeId id) const { return val_[id]; }
  double adjoint(NodeId id) const { return adj_[id]; }
  std::size_t size() const { return op_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps backwards. Adjoints of earlier
  // backward() calls are discarded.
  void backward(NodeId root);

  void clear();

 private:
  enum class Op : std::uint8_t {
    kConst, kAdd, kSub, kNeg, kMul, kDiv, kExp, kLog, kSquare, kSqrt,
    kGaussLogPdf, kNormalCdf, kExternal, kAddConst, kMulConst,
  };

  NodeId push(Op op, NodeId a, NodeId b, NodeId c, double value, double aux = 0.0);

  std::vector<Op> op_;
  std::vector<NodeId> a_, b_, c_;
  std::vector<double> val_;
  std::vector<double> aux_;  // folded constants
  std::vector<double> adj_;
  // external-node argument/partial storage
  std::vector<std::int32_t> ext_offset_, ext_arity_;
  std::vector<NodeId> ext_args_;
  std::vector<double> ext_partials_;
};

}  // namespace smm::ad
