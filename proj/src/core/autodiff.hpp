#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace tempscale {

struct Parameter {
  Tensor value;
  Tensor grad;  // accumulator, same shape as value
};

// Named parameters with paired gradient accumulators. Gradients accumulate
// additively across backward passes until zero_grad().
class ParameterStore {
public:
  Tensor& create(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  std::vector<std::string> names() const;  // sorted
  std::size_t count() const { return params_.size(); }
  void zero_grad();

private:
  std::map<std::string, Parameter> params_;
};

// Reverse-mode tape over tensor-level operations. A tape is confined to one
// forward/backward pass on one thread; tensors themselves are immutable
// values and safe to share.
class Tape {
public:
  using NodeId = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  NodeId input(Tensor value);                                    // differentiable, grad kept on the node
  NodeId constant(Tensor value);                                 // no gradient tracked
  NodeId param(ParameterStore& store, const std::string& name);  // grad flows into the store accumulator

  // Arithmetic.
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId div(NodeId a, NodeId b);  // elementwise
  NodeId affine(NodeId a, double scale, double shift);  // scale * a + shift
  NodeId neg(NodeId a) { return affine(a, -1.0, 0.0); }

  // Structure and reductions.
  NodeId add_bias(NodeId m, NodeId bias);          // [R x C] + [C], broadcast over rows
  NodeId add_channel_bias(NodeId x, NodeId bias);  // [B,O,H,W] + [O]
  NodeId relu(NodeId a);                           // derivative at exactly 0 is 0
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId clamp_min(NodeId a, double lo);  // max(a, lo); no gradient when saturated
  NodeId sum(NodeId a);                   // -> scalar
  NodeId mean(NodeId a);                  // -> scalar
  NodeId row_sum(NodeId a);               // [R x C] -> [R]
  NodeId shift_rows(NodeId a, Tensor offsets);            // a[r,c] + offsets[r], offsets constant
  NodeId gather_cols(NodeId a, std::vector<int> cols);    // [R x C] -> [R], one column per row
  NodeId pick(NodeId a, int flat_index);                  // -> scalar
  NodeId reshape(NodeId a, Shape new_shape);
  NodeId flatten(NodeId a);  // collapse all dims after the first

  // Convolution (cross-correlation, no kernel flip), stride 1.
  // pad_same=false gives a valid convolution; pad_same=true keeps the spatial
  // size and requires odd kernel dims.
  NodeId conv2d(NodeId x, NodeId kernel, bool pad_same);
  NodeId avg_pool2(NodeId x);  // 2x2 mean pooling, stride 2

  // Reverse sweep from a scalar output. Gradients accumulate into input-leaf
  // accumulators and bound ParameterStore entries; calling twice doubles them.
  void backward(NodeId output);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(NodeId id) const;  // leaf accumulator
  std::size_t node_count() const { return nodes_.size(); }

private:
  enum class Op : std::uint8_t {
    leaf, matmul, add, sub, mul, div, affine, add_bias, add_channel_bias, relu,
    exp, log, clamp_min, sum, mean, row_sum, shift_rows, gather_cols, pick,
    reshape, conv2d, avg_pool2,
  };

  struct Node {
    Op op = Op::leaf;
    int in0 = -1, in1 = -1;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Parameter* bound = nullptr;
    double c0 = 0.0, c1 = 0.0;
    int i0 = 0, i1 = 0;  // conv padding
    std::vector<int> cols;
    Tensor aux;
  };

  NodeId push(Node n);
  NodeId unary(Op op, NodeId a, Tensor value);
  NodeId binary(Op op, NodeId a, NodeId b, Tensor value);
  Tensor& grad_ref(Node& n);
  void dispatch(Node& n);

  std::vector<Node> nodes_;
};

// Central-difference gradient of a scalar function; the independent oracle
// for every analytic gradient in the project.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& point, double h);

}  // namespace tempscale
