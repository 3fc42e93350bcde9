#include "core/autodiff.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace tempscale {

Tensor& ParameterStore::create(const std::string& name, Tensor init) {
  if (has(name)) throw UsageError("parameter '" + name + "' already exists");
  Parameter p;
  p.grad = Tensor(init.shape());
  p.value = std::move(init);
  auto [it, ok] = params_.emplace(name, std::move(p));
  (void)ok;
  return it->second.value;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [k, v] : params_) out.push_back(k);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [k, p] : params_) std::fill(p.grad.vals().begin(), p.grad.vals().end(), 0.0);
}

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::input(Tensor value) {
  Node n;
  n.is_leaf = true;
  n.requires_grad = true;
  n.grad = Tensor(value.shape());
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::constant(Tensor value) {
  Node n;
  n.is_leaf = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::param(ParameterStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  Node n;
  n.is_leaf = true;
  n.requires_grad = true;
  n.bound = &p;
  n.value = p.value;
  return push(std::move(n));
}

Tape::NodeId Tape::unary(Op op, NodeId a, Tensor value) {
  Node n;
  n.op = op;
  n.in0 = a;
  n.requires_grad = nodes_[static_cast<std::size_t>(a)].requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::binary(Op op, NodeId a, NodeId b, Tensor value) {
  Node n;
  n.op = op;
  n.in0 = a;
  n.in1 = b;
  n.requires_grad = nodes_[static_cast<std::size_t>(a)].requires_grad ||
                    nodes_[static_cast<std::size_t>(b)].requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  return binary(Op::matmul, a, b, tempscale::matmul(value(a), value(b)));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) { return binary(Op::add, a, b, tempscale::add(value(a), value(b))); }
Tape::NodeId Tape::sub(NodeId a, NodeId b) { return binary(Op::sub, a, b, tempscale::sub(value(a), value(b))); }
Tape::NodeId Tape::mul(NodeId a, NodeId b) { return binary(Op::mul, a, b, tempscale::mul(value(a), value(b))); }

Tape::NodeId Tape::div(NodeId a, NodeId b) {
  check_same_shape(value(a), value(b), "div");
  Tensor v = value(a);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= value(b)[i];
  return binary(Op::div, a, b, std::move(v));
}

Tape::NodeId Tape::affine(NodeId a, double s, double t) {
  Tensor v = value(a);
  for (double& x : v.vals()) x = s * x + t;
  NodeId id = unary(Op::affine, a, std::move(v));
  nodes_[static_cast<std::size_t>(id)].c0 = s;
  return id;
}

Tape::NodeId Tape::add_bias(NodeId m, NodeId bias) {
  const Tensor& mv = value(m);
  const Tensor& bv = value(bias);
  if (mv.ndim() != 2 || bv.ndim() != 1 || bv.dim(0) != mv.cols()) {
    throw ShapeError("add_bias: shapes " + shape_str(mv.shape()) + " and " + shape_str(bv.shape()));
  }
  Tensor v = mv;
  for (int r = 0; r < mv.rows(); ++r)
    for (int c = 0; c < mv.cols(); ++c) v.at(r, c) += bv[static_cast<std::size_t>(c)];
  return binary(Op::add_bias, m, bias, std::move(v));
}

Tape::NodeId Tape::add_channel_bias(NodeId x, NodeId bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  if (xv.ndim() != 4 || bv.ndim() != 1 || bv.dim(0) != xv.dim(1)) {
    throw ShapeError("add_channel_bias: shapes " + shape_str(xv.shape()) + " and " + shape_str(bv.shape()));
  }
  Tensor v = xv;
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  double* pv = v.data();
  for (int b = 0; b < xv.dim(0); ++b)
    for (int o = 0; o < xv.dim(1); ++o) {
      const double bo = bv[static_cast<std::size_t>(o)];
      double* plane = pv + (static_cast<std::size_t>(b) * xv.dim(1) + o) * hw;
      for (std::size_t i = 0; i < hw; ++i) plane[i] += bo;
    }
  return binary(Op::add_channel_bias, x, bias, std::move(v));
}

Tape::NodeId Tape::relu(NodeId a) {
  Tensor v = value(a);
  for (double& x : v.vals()) x = x > 0.0 ? x : 0.0;
  return unary(Op::relu, a, std::move(v));
}

Tape::NodeId Tape::exp(NodeId a) {
  Tensor v = value(a);
  for (double& x : v.vals()) x = std::exp(x);
  return unary(Op::exp, a, std::move(v));
}

Tape::NodeId Tape::log(NodeId a) {
  Tensor v = value(a);
  for (double& x : v.vals()) x = std::log(x);
  return unary(Op::log, a, std::move(v));
}

Tape::NodeId Tape::clamp_min(NodeId a, double lo) {
  Tensor v = value(a);
  for (double& x : v.vals()) x = x > lo ? x : lo;
  NodeId id = unary(Op::clamp_min, a, std::move(v));
  nodes_[static_cast<std::size_t>(id)].c0 = lo;
  return id;
}

Tape::NodeId Tape::sum(NodeId a) {
  double s = 0.0;
  for (double x : value(a).vals()) s += x;
  return unary(Op::sum, a, Tensor::scalar(s));
}

Tape::NodeId Tape::mean(NodeId a) {
  double s = 0.0;
  for (double x : value(a).vals()) s += x;
  return unary(Op::mean, a, Tensor::scalar(s / static_cast<double>(value(a).size())));
}

Tape::NodeId Tape::row_sum(NodeId a) {
  const Tensor& av = value(a);
  if (av.ndim() != 2) throw ShapeError("row_sum: expected 2-d tensor, got " + shape_str(av.shape()));
  Tensor v({av.rows()});
  for (int r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < av.cols(); ++c) s += av.at(r, c);
    v[static_cast<std::size_t>(r)] = s;
  }
  return unary(Op::row_sum, a, std::move(v));
}

Tape::NodeId Tape::shift_rows(NodeId a, Tensor offsets) {
  const Tensor& av = value(a);
  if (av.ndim() != 2 || offsets.ndim() != 1 || offsets.dim(0) != av.rows()) {
    throw ShapeError("shift_rows: shapes " + shape_str(av.shape()) + " and " + shape_str(offsets.shape()));
  }
  Tensor v = av;
  for (int r = 0; r < av.rows(); ++r)
    for (int c = 0; c < av.cols(); ++c) v.at(r, c) += offsets[static_cast<std::size_t>(r)];
  NodeId id = unary(Op::shift_rows, a, std::move(v));
  nodes_[static_cast<std::size_t>(id)].aux = std::move(offsets);
  return id;
}

Tape::NodeId Tape::gather_cols(NodeId a, std::vector<int> cols) {
  const Tensor& av = value(a);
  if (av.ndim() != 2 || static_cast<int>(cols.size()) != av.rows()) {
    throw ShapeError("gather_cols: need one column index per row of " + shape_str(av.shape()));
  }
  Tensor v({av.rows()});
  for (int r = 0; r < av.rows(); ++r) {
    int c = cols[static_cast<std::size_t>(r)];
    if (c < 0 || c >= av.cols()) throw IndexError("gather_cols: column " + std::to_string(c));
    v[static_cast<std::size_t>(r)] = av.at(r, c);
  }
  NodeId id = unary(Op::gather_cols, a, std::move(v));
  nodes_[static_cast<std::size_t>(id)].cols = std::move(cols);
  return id;
}

Tape::NodeId Tape::pick(NodeId a, int flat_index) {
  const Tensor& av = value(a);
  if (flat_index < 0 || static_cast<std::size_t>(flat_index) >= av.size()) {
    throw IndexError("pick: index " + std::to_string(flat_index) + " out of " + std::to_string(av.size()));
  }
  NodeId id = unary(Op::pick, a, Tensor::scalar(av[static_cast<std::size_t>(flat_index)]));
  nodes_[static_cast<std::size_t>(id)].i0 = flat_index;
  return id;
}

Tape::NodeId Tape::reshape(NodeId a, Shape new_shape) {
  return unary(Op::reshape, a, value(a).reshaped(std::move(new_shape)));
}

Tape::NodeId Tape::flatten(NodeId a) {
  const Tensor& av = value(a);
  if (av.ndim() < 2) return reshape(a, av.shape());
  int rest = 1;
  for (int i = 1; i < av.ndim(); ++i) rest *= av.dim(i);
  return reshape(a, {av.dim(0), rest});
}

namespace {

void conv2d_dims(const Tensor& x, const Tensor& k, bool pad_same, int& ph, int& pw, int& ho, int& wo) {
  if (x.ndim() != 4 || k.ndim() != 4) {
    throw ShapeError("conv2d: expected [B,C,H,W] and [O,C,kh,kw], got " + shape_str(x.shape()) + " and " +
                     shape_str(k.shape()));
  }
  if (x.dim(1) != k.dim(1)) throw ShapeError("conv2d: channel mismatch");
  const int kh = k.dim(2), kw = k.dim(3);
  if (pad_same && (kh % 2 == 0 || kw % 2 == 0)) throw UsageError("conv2d: same padding requires odd kernel dims");
  ph = pad_same ? (kh - 1) / 2 : 0;
  pw = pad_same ? (kw - 1) / 2 : 0;
  ho = x.dim(2) + 2 * ph - kh + 1;
  wo = x.dim(3) + 2 * pw - kw + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");
}

}  // namespace

Tape::NodeId Tape::conv2d(NodeId x, NodeId kernel, bool pad_same) {
  const Tensor& xv = value(x);
  const Tensor& kv = value(kernel);
  int ph, pw, ho, wo;
  conv2d_dims(xv, kv, pad_same, ph, pw, ho, wo);
  const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int O = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  Tensor v({B, O, ho, wo});
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double s = 0.0;
          for (int c = 0; c < C; ++c)
            for (int u = 0; u < kh; ++u) {
              const int y = i + u - ph;
              if (y < 0 || y >= H) continue;
              for (int w = 0; w < kw; ++w) {
                const int z = j + w - pw;
                if (z < 0 || z >= W) continue;
                s += xv[((static_cast<std::size_t>(b) * C + c) * H + y) * W + z] *
                     kv[((static_cast<std::size_t>(o) * C + c) * kh + u) * kw + w];
              }
            }
          v[((static_cast<std::size_t>(b) * O + o) * ho + i) * wo + j] = s;
        }
  NodeId id = binary(Op::conv2d, x, kernel, std::move(v));
  nodes_[static_cast<std::size_t>(id)].i0 = ph;
  nodes_[static_cast<std::size_t>(id)].i1 = pw;
  return id;
}

Tape::NodeId Tape::avg_pool2(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.ndim() != 4) throw ShapeError("avg_pool2: expected [B,C,H,W], got " + shape_str(xv.shape()));
  const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (H % 2 != 0 || W % 2 != 0) throw UsageError("avg_pool2: spatial dims must be even");
  Tensor v({B, C, H / 2, W / 2});
  std::size_t idx = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H; i += 2)
        for (int j = 0; j < W; j += 2) {
          const std::size_t base = ((static_cast<std::size_t>(b) * C + c) * H + i) * W + j;
          v[idx++] = 0.25 * (xv[base] + xv[base + 1] + xv[base + W] + xv[base + W + 1]);
        }
  return unary(Op::avg_pool2, x, std::move(v));
}

Tensor& Tape::grad_ref(Node& n) { return n.bound ? n.bound->grad : n.grad; }

void Tape::backward(NodeId output) {
  Node& out = nodes_[static_cast<std::size_t>(output)];
  if (!out.value.is_scalar()) {
    throw UsageError("backward: output must be scalar, got shape " + shape_str(out.value.shape()));
  }
  if (!out.requires_grad) return;

  // Restrict the sweep to nodes between the output and a differentiable leaf.
  std::vector<char> live(nodes_.size(), 0);
  live[static_cast<std::size_t>(output)] = 1;
  for (int u = output; u >= 0; --u) {
    if (!live[static_cast<std::size_t>(u)]) continue;
    const Node& n = nodes_[static_cast<std::size_t>(u)];
    for (int in : {n.in0, n.in1}) {
      if (in >= 0 && nodes_[static_cast<std::size_t>(in)].requires_grad) live[static_cast<std::size_t>(in)] = 1;
    }
  }

  // Fresh workspace for interior nodes; leaf accumulators persist.
  for (int u = 0; u <= output; ++u) {
    Node& n = nodes_[static_cast<std::size_t>(u)];
    if (live[static_cast<std::size_t>(u)] && !n.is_leaf) n.grad = Tensor(n.value.shape());
  }

  grad_ref(out)[0] += 1.0;
  for (int u = output; u >= 0; --u) {
    Node& n = nodes_[static_cast<std::size_t>(u)];
    if (live[static_cast<std::size_t>(u)] && !n.is_leaf) dispatch(n);
  }
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.is_leaf || !n.requires_grad) throw UsageError("grad: node is not a differentiable leaf");
  return n.bound ? n.bound->grad : n.grad;
}

void Tape::dispatch(Node& n) {
  Node& a = nodes_[static_cast<std::size_t>(n.in0)];
  Node* b = n.in1 >= 0 ? &nodes_[static_cast<std::size_t>(n.in1)] : nullptr;
  const Tensor& g = n.grad;

  switch (n.op) {
    case Op::matmul: {
      // out = A B ; gA += g B^T ; gB += A^T g
      const Tensor& av = a.value;
      const Tensor& bv = b->value;
      const int m = av.rows(), k = av.cols(), c = bv.cols();
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (int i = 0; i < m; ++i) {
          const double* grow = g.data() + static_cast<std::size_t>(i) * c;
          double* garow = ga.data() + static_cast<std::size_t>(i) * k;
          for (int l = 0; l < k; ++l) {
            const double* brow = bv.data() + static_cast<std::size_t>(l) * c;
            double s = 0.0;
            for (int j = 0; j < c; ++j) s += grow[j] * brow[j];
            garow[l] += s;
          }
        }
      }
      if (b->requires_grad) {
        Tensor& gb = grad_ref(*b);
        for (int i = 0; i < m; ++i) {
          const double* arow = av.data() + static_cast<std::size_t>(i) * k;
          const double* grow = g.data() + static_cast<std::size_t>(i) * c;
          for (int l = 0; l < k; ++l) {
            const double al = arow[l];
            double* gbrow = gb.data() + static_cast<std::size_t>(l) * c;
            for (int j = 0; j < c; ++j) gbrow[j] += al * grow[j];
          }
        }
      }
      break;
    }
    case Op::add: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b->requires_grad) {
        Tensor& gb = grad_ref(*b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      break;
    }
    case Op::sub: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b->requires_grad) {
        Tensor& gb = grad_ref(*b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      break;
    }
    case Op::mul: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b->value[i];
      }
      if (b->requires_grad) {
        Tensor& gb = grad_ref(*b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value[i];
      }
      break;
    }
    case Op::div: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / b->value[i];
      }
      if (b->requires_grad) {
        Tensor& gb = grad_ref(*b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * a.value[i] / (b->value[i] * b->value[i]);
      }
      break;
    }
    case Op::affine: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.c0 * g[i];
      }
      break;
    }
    case Op::add_bias: {
      const int r = n.value.rows(), c = n.value.cols();
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b->requires_grad) {
        Tensor& gb = grad_ref(*b);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gb[static_cast<std::size_t>(j)] += g.at(i, j);
      }
      break;
    }
    case Op::add_channel_bias: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b->requires_grad) {
        Tensor& gb = grad_ref(*b);
        const int B = n.value.dim(0), O = n.value.dim(1);
        const std::size_t hw = static_cast<std::size_t>(n.value.dim(2)) * n.value.dim(3);
        for (int bb = 0; bb < B; ++bb)
          for (int o = 0; o < O; ++o) {
            const double* plane = g.data() + (static_cast<std::size_t>(bb) * O + o) * hw;
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += plane[i];
            gb[static_cast<std::size_t>(o)] += s;
          }
      }
      break;
    }
    case Op::relu: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += a.value[i] > 0.0 ? g[i] : 0.0;
      }
      break;
    }
    case Op::exp: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      }
      break;
    }
    case Op::log: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a.value[i];
      }
      break;
    }
    case Op::clamp_min: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += a.value[i] > n.c0 ? g[i] : 0.0;
      }
      break;
    }
    case Op::sum: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        const double gv = g[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
      }
      break;
    }
    case Op::mean: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        const double gv = g[0] / static_cast<double>(a.value.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
      }
      break;
    }
    case Op::row_sum: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        const int r = a.value.rows(), c = a.value.cols();
        for (int i = 0; i < r; ++i) {
          const double gv = g[static_cast<std::size_t>(i)];
          for (int j = 0; j < c; ++j) ga.at(i, j) += gv;
        }
      }
      break;
    }
    case Op::shift_rows: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::gather_cols: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (int r = 0; r < a.value.rows(); ++r) ga.at(r, n.cols[static_cast<std::size_t>(r)]) += g[static_cast<std::size_t>(r)];
      }
      break;
    }
    case Op::pick: {
      if (a.requires_grad) grad_ref(a)[static_cast<std::size_t>(n.i0)] += g[0];
      break;
    }
    case Op::reshape: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::conv2d: {
      const Tensor& xv = a.value;
      const Tensor& kv = b->value;
      const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
      const int O = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
      const int ho = n.value.dim(2), wo = n.value.dim(3);
      const int ph = n.i0, pw = n.i1;
      Tensor* gx = a.requires_grad ? &grad_ref(a) : nullptr;
      Tensor* gk = b->requires_grad ? &grad_ref(*b) : nullptr;
      for (int bb = 0; bb < B; ++bb)
        for (int o = 0; o < O; ++o)
          for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
              const double gv = g[((static_cast<std::size_t>(bb) * O + o) * ho + i) * wo + j];
              if (gv == 0.0) continue;
              for (int c = 0; c < C; ++c)
                for (int u = 0; u < kh; ++u) {
                  const int y = i + u - ph;
                  if (y < 0 || y >= H) continue;
                  for (int w = 0; w < kw; ++w) {
                    const int z = j + w - pw;
                    if (z < 0 || z >= W) continue;
                    const std::size_t xi = ((static_cast<std::size_t>(bb) * C + c) * H + y) * W + z;
                    const std::size_t ki = ((static_cast<std::size_t>(o) * C + c) * kh + u) * kw + w;
                    if (gx) (*gx)[xi] += gv * kv[ki];
                    if (gk) (*gk)[ki] += gv * xv[xi];
                  }
                }
            }
      break;
    }
    case Op::avg_pool2: {
      if (a.requires_grad) {
        Tensor& ga = grad_ref(a);
        const int B = a.value.dim(0), C = a.value.dim(1), H = a.value.dim(2), W = a.value.dim(3);
        std::size_t idx = 0;
        for (int b2 = 0; b2 < B; ++b2)
          for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; i += 2)
              for (int j = 0; j < W; j += 2) {
                const double gv = 0.25 * g[idx++];
                const std::size_t base = ((static_cast<std::size_t>(b2) * C + c) * H + i) * W + j;
                ga[base] += gv;
                ga[base + 1] += gv;
                ga[base + W] += gv;
                ga[base + W + 1] += gv;
              }
      }
      break;
    }
    case Op::leaf:
      break;
  }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& point, double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_grad: h must be positive");
  Tensor g(point.shape());
  Tensor p = point;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = fn(p);
    p[i] = orig - h;
    const double fm = fn(p);
    p[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace tempscale
