#include "core/loss_graph.hpp"

#include "core/errors.hpp"
#include "core/softmax.hpp"

namespace tempscale {

Tape::NodeId ce_graph(Tape& tape, Tape::NodeId logits, const std::vector<int>& labels, double tau,
                      bool mean_reduce) {
  if (!(tau > 0.0)) throw DomainError("temperature must be > 0");
  const Tensor& z = tape.value(logits);
  if (z.ndim() != 2 || z.rows() != static_cast<int>(labels.size())) {
    throw ShapeError("ce_graph: logits " + shape_str(z.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= z.cols()) throw IndexError("label " + std::to_string(y) + " out of range");
  }
  Tensor neg_row_max({z.rows()});
  for (int r = 0; r < z.rows(); ++r) {
    const double* row = z.data() + static_cast<std::size_t>(r) * z.cols();
    neg_row_max[static_cast<std::size_t>(r)] = -row[argmax_lowest(row, z.cols())];
  }
  auto shifted = tape.affine(tape.shift_rows(logits, std::move(neg_row_max)), 1.0 / tau, 0.0);
  auto lse = tape.log(tape.row_sum(tape.exp(shifted)));
  auto picked = tape.gather_cols(shifted, labels);
  auto per_row = tape.sub(lse, picked);
  return mean_reduce ? tape.mean(per_row) : tape.sum(per_row);
}

}  // namespace tempscale
