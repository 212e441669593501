#include "smm/autodiff.hpp"

#include <cmath>

#include "smm/errors.hpp"
#include "smm/normal.hpp"

namespace smm::ad {

NodeId Tape::push(Op op, NodeId a, NodeId b, NodeId c, double value, double aux) {
  op_.push_back(op);
  a_.push_back(a);
  b_.push_back(b);
  c_.push_back(c);
  val_.push_back(value);
  aux_.push_back(aux);
  ext_offset_.push_back(-1);
  ext_arity_.push_back(0);
  return static_cast<NodeId>(op_.size() - 1);
}

NodeId Tape::constant(double v) { return push(Op::kConst, -1, -1, -1, v); }

NodeId Tape::add(NodeId a, NodeId b) { return push(Op::kAdd, a, b, -1, val_[a] + val_[b]); }

NodeId Tape::sub(NodeId a, NodeId b) { return push(Op::kSub, a, b, -1, val_[a] - val_[b]); }

NodeId Tape::neg(NodeId a) { return push(Op::kNeg, a, -1, -1, -val_[a]); }

NodeId Tape::mul(NodeId a, NodeId b) { return push(Op::kMul, a, b, -1, val_[a] * val_[b]); }

NodeId Tape::div(NodeId a, NodeId b) { return push(Op::kDiv, a, b, -1, val_[a] / val_[b]); }

NodeId Tape::exp(NodeId a) { return push(Op::kExp, a, -1, -1, std::exp(val_[a])); }

NodeId Tape::log(NodeId a) { return push(Op::kLog, a, -1, -1, std::log(val_[a])); }

NodeId Tape::square(NodeId a) { return push(Op::kSquare, a, -1, -1, val_[a] * val_[a]); }

NodeId Tape::sqrt(NodeId a) { return push(Op::kSqrt, a, -1, -1, std::sqrt(val_[a])); }

NodeId Tape::gauss_log_pdf(NodeId x, NodeId mu, NodeId log_sigma) {
  const double ls = val_[log_sigma];
  const double t = (val_[x] - val_[mu]) * std::exp(-ls);
  return push(Op::kGaussLogPdf, x, mu, log_sigma, -0.5 * kLogTwoPi - ls - 0.5 * t * t);
}

NodeId Tape::normal_cdf(NodeId z) {
  return push(Op::kNormalCdf, z, -1, -1, smm::normal_cdf(val_[z]));
}

NodeId Tape::external(std::span<const NodeId> args, double value, std::span<const double> partials) {
  if (args.size() != partials.size()) {
    throw InvalidInput("Tape::external: one partial per argument required");
  }
  const NodeId id = push(Op::kExternal, -1, -1, -1, value);
  ext_offset_[id] = static_cast<std::int32_t>(ext_args_.size());
  ext_arity_[id] = static_cast<std::int32_t>(args.size());
  ext_args_.insert(ext_args_.end(), args.begin(), args.end());
  ext_partials_.insert(ext_partials_.end(), partials.begin(), partials.end());
  return id;
}

NodeId Tape::add_const(NodeId a, double c) {
  return push(Op::kAddConst, a, -1, -1, val_[a] + c, c);
}

NodeId Tape::mul_const(NodeId a, double c) {
  return push(Op::kMulConst, a, -1, -1, val_[a] * c, c);
}

void Tape::backward(NodeId root) {
  if (root < 0 || static_cast<std::size_t>(root) >= op_.size()) {
    throw InvalidInput("Tape::backward: root out of range");
  }
  adj_.assign(op_.size(), 0.0);
  adj_[root] = 1.0;
  for (NodeId i = root; i >= 0; --i) {
    const double g = adj_[i];
    if (g == 0.0) continue;
    switch (op_[i]) {
      case Op::kConst:
        break;
      case Op::kAdd:
        adj_[a_[i]] += g;
        adj_[b_[i]] += g;
        break;
      case Op::kSub:
        adj_[a_[i]] += g;
        adj_[b_[i]] -= g;
        break;
      case Op::kNeg:
        adj_[a_[i]] -= g;
        break;
      case Op::kMul:
        adj_[a_[i]] += g * val_[b_[i]];
        adj_[b_[i]] += g * val_[a_[i]];
        break;
      case Op::kDiv: {
        const double inv = 1.0 / val_[b_[i]];
        adj_[a_[i]] += g * inv;
        adj_[b_[i]] -= g * val_[i] * inv;
        break;
      }
      case Op::kExp:
        adj_[a_[i]] += g * val_[i];
        break;
      case Op::kLog:
        adj_[a_[i]] += g / val_[a_[i]];
        break;
      case Op::kSquare:
        adj_[a_[i]] += g * 2.0 * val_[a_[i]];
        break;
      case Op::kSqrt:
        adj_[a_[i]] += g * 0.5 / val_[i];
        break;
      case Op::kGaussLogPdf: {
        const double inv_s = std::exp(-val_[c_[i]]);
        const double t = (val_[a_[i]] - val_[b_[i]]) * inv_s;
        adj_[a_[i]] += g * (-t * inv_s);
        adj_[b_[i]] += g * (t * inv_s);
        adj_[c_[i]] += g * (t * t - 1.0);
        break;
      }
      case Op::kNormalCdf:
        adj_[a_[i]] += g * std::exp(normal_log_pdf(val_[a_[i]]));
        break;
      case Op::kExternal: {
        const std::int32_t off = ext_offset_[i];
        for (std::int32_t j = 0; j < ext_arity_[i]; ++j) {
          adj_[ext_args_[off + j]] += g * ext_partials_[off + j];
        }
        break;
      }
      case Op::kAddConst:
        adj_[a_[i]] += g;
        break;
      case Op::kMulConst:
        adj_[a_[i]] += g * aux_[i];
        break;
    }
  }
}

void Tape::clear() {
  op_.clear();
  a_.clear();
  b_.clear();
  c_.clear();
  val_.clear();
  aux_.clear();
  adj_.clear();
  ext_offset_.clear();
  ext_arity_.clear();
  ext_args_.clear();
  ext_partials_.clear();
}

}  // namespace smm::ad
