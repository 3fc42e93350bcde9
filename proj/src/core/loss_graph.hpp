#pragma once

#include <vector>

#include "core/autodiff.hpp"

namespace tempscale {

// Temperature cross-entropy over a [B x M] logit node, built from generic
// tape primitives (log-sum-exp with a detached row max, which leaves the
// gradient unchanged). Returns a scalar node: mean over rows when
// mean_reduce, else sum.
Tape::NodeId ce_graph(Tape& tape, Tape::NodeId logits, const std::vector<int>& labels, double tau,
                      bool mean_reduce);

}  // namespace tempscale
