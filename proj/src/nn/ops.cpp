#include "clrm/nn/ops.hpp"

#include <cmath>

#include "clrm/common/errors.hpp"

namespace clrm::nn {
namespace {

Eigen::VectorXd* parent_grad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ArgumentError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
}

void require_rank(const char* op, const Tensor& x, int rank) {
  if (x.rank() != rank) {
    throw ArgumentError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_string(x.shape()));
  }
}

std::vector<Tensor> defined(std::initializer_list<Tensor> ts) {
  std::vector<Tensor> out;
  for (const auto& t : ts)
    if (t.defined()) out.push_back(t);
  return out;
}

template <class F, class D>
Tensor unary(const Tensor& x, F f, D derivative) {
  Eigen::VectorXd y = x.value().unaryExpr(f);
  return make_result(x.shape(), y, {x}, [derivative](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (Eigen::Index i = 0; i < xv.size(); ++i) (*g)[i] += self.grad[i] * derivative(xv[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear", w, 2);
  const int in = w.dim(0), out = w.dim(1);
  const bool vector_input = x.rank() == 1;
  if (x.rank() > 2 || (vector_input ? x.dim(0) : x.dim(1)) != in) shape_error("linear", x, w);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out)) shape_error("linear(bias)", w, b);
  const int n = vector_input ? 1 : x.dim(0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n) * out);
  MatrixMap Y(y.data(), n, out);
  const ConstMatrixMap X(x.value().data(), n, in);
  const ConstMatrixMap W(w.value().data(), in, out);
  Y.noalias() = X * W;
  if (b.defined()) Y.rowwise() += b.value().transpose();
  const Shape shape = vector_input ? Shape{out} : Shape{n, out};
  return make_result(shape, std::move(y), defined({x, w, b}), [n, in, out](Node& self) {
    const ConstMatrixMap dY(self.grad.data(), n, out);
    const ConstMatrixMap X(self.parents[0]->value.data(), n, in);
    const ConstMatrixMap W(self.parents[1]->value.data(), in, out);
    if (auto* g = parent_grad(self, 0)) MatrixMap(g->data(), n, in).noalias() += dY * W.transpose();
    if (auto* g = parent_grad(self, 1)) MatrixMap(g->data(), in, out).noalias() += X.transpose() * dY;
    if (self.parents.size() > 2) {
      if (auto* g = parent_grad(self, 2)) *g += dY.colwise().sum().transpose();
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a, b);
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n) * m);
  MatrixMap(y.data(), n, m).noalias() = a.matrix() * b.matrix();
  return make_result({n, m}, std::move(y), {a, b}, [n, k, m](Node& self) {
    const ConstMatrixMap dY(self.grad.data(), n, m);
    const ConstMatrixMap A(self.parents[0]->value.data(), n, k);
    const ConstMatrixMap B(self.parents[1]->value.data(), k, m);
    if (auto* g = parent_grad(self, 0)) MatrixMap(g->data(), n, k).noalias() += dY * B.transpose();
    if (auto* g = parent_grad(self, 1)) MatrixMap(g->data(), k, m).noalias() += A.transpose() * dY;
  });
}

namespace {

// a +/- b with b either the same size or a row broadcast over the last axis.
Tensor add_impl(const Tensor& a, const Tensor& b, double sign, const char* op) {
  if (a.size() == b.size() && a.shape() == b.shape()) {
    Eigen::VectorXd y = a.value() + sign * b.value();
    return make_result(a.shape(), std::move(y), {a, b}, [sign](Node& self) {
      if (auto* g = parent_grad(self, 0)) *g += self.grad;
      if (auto* g = parent_grad(self, 1)) *g += sign * self.grad;
    });
  }
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    const int m = b.dim(0), n = a.size() / m;
    Eigen::VectorXd y = a.value();
    MatrixMap(y.data(), n, m).rowwise() += sign * b.value().transpose();
    return make_result(a.shape(), std::move(y), {a, b}, [sign, n, m](Node& self) {
      if (auto* g = parent_grad(self, 0)) *g += self.grad;
      if (auto* g = parent_grad(self, 1)) *g += sign * ConstMatrixMap(self.grad.data(), n, m).colwise().sum().transpose();
    });
  }
  shape_error(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  Eigen::VectorXd y = a.value().cwiseProduct(b.value());
  return make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) *g += self.grad.cwiseProduct(self.parents[1]->value);
    if (auto* g = parent_grad(self, 1)) *g += self.grad.cwiseProduct(self.parents[0]->value);
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_result(a.shape(), a.value() * factor, {a}, [factor](Node& self) {
    if (auto* g = parent_grad(self, 0)) *g += factor * self.grad;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  return make_result(a.shape(), a.value().array() + c, {a}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) *g += self.grad;
  });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("minimum", a, b);
  Eigen::VectorXd y = a.value().cwiseMin(b.value());
  return make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (Eigen::Index i = 0; i < av.size(); ++i) {
      if (av[i] <= bv[i]) {
        if (ga) (*ga)[i] += self.grad[i];
      } else if (gb) {
        (*gb)[i] += self.grad[i];
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ArgumentError("clamp: lo must not exceed hi");
  return unary(
      x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  Eigen::VectorXd y(1);
  y[0] = x.value().sum();
  return make_result({}, std::move(y), {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) g->array() += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ArgumentError("mean: empty tensor");
  return scale(sum(x), 1.0 / x.size());
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw ArgumentError("layer_norm: scalar input");
  const int d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) shape_error("layer_norm", x, gain);
  const int rows = x.size() / d;
  Eigen::VectorXd xhat(x.size()), inv(rows), y(x.size());
  for (int r = 0; r < rows; ++r) {
    const auto row = x.value().segment(static_cast<Eigen::Index>(r) * d, d);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    inv[r] = 1.0 / std::sqrt(var + eps);
    xhat.segment(static_cast<Eigen::Index>(r) * d, d) = (row.array() - mu) * inv[r];
    y.segment(static_cast<Eigen::Index>(r) * d, d) =
        xhat.segment(static_cast<Eigen::Index>(r) * d, d).cwiseProduct(gain.value()) + bias.value();
  }
  return make_result(x.shape(), std::move(y), {x, gain, bias}, [xhat, inv, rows, d](Node& self) {
    const auto& gv = self.parents[1]->value;
    auto* gx = parent_grad(self, 0);
    auto* gg = parent_grad(self, 1);
    auto* gb = parent_grad(self, 2);
    for (int r = 0; r < rows; ++r) {
      const auto dy = self.grad.segment(static_cast<Eigen::Index>(r) * d, d);
      const auto xh = xhat.segment(static_cast<Eigen::Index>(r) * d, d);
      if (gg) *gg += dy.cwiseProduct(xh);
      if (gb) *gb += dy;
      if (gx) {
        const Eigen::VectorXd dxh = dy.cwiseProduct(gv);
        const double m1 = dxh.mean();
        const double m2 = dxh.cwiseProduct(xh).mean();
        gx->segment(static_cast<Eigen::Index>(r) * d, d).array() += inv[r] * (dxh.array() - m1 - xh.array() * m2);
      }
    }
  });
}

Tensor masked_softmax(const Tensor& x, const std::vector<int>& leading_masked, int group) {
  require_rank("masked_softmax", x, 2);
  const int rows = x.dim(0), cols = x.dim(1);
  if (group < 1 || (!leading_masked.empty() && static_cast<int>(leading_masked.size()) * group != rows)) {
    throw ArgumentError("masked_softmax: mask covers " + std::to_string(leading_masked.size()) + " groups of " +
                        std::to_string(group) + ", input has " + std::to_string(rows) + " rows");
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
  for (int r = 0; r < rows; ++r) {
    const int skip = leading_masked.empty() ? 0 : leading_masked[r / group];
    if (skip >= cols) throw ArgumentError("masked_softmax: row with every entry masked");
    const auto in = x.value().segment(static_cast<Eigen::Index>(r) * cols + skip, cols - skip);
    auto out = y.segment(static_cast<Eigen::Index>(r) * cols + skip, cols - skip);
    out = (in.array() - in.maxCoeff()).exp();
    out /= out.sum();
  }
  return make_result(x.shape(), std::move(y), {x}, [rows, cols](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (int r = 0; r < rows; ++r) {
        const auto yr = self.value.segment(static_cast<Eigen::Index>(r) * cols, cols);
        const auto dy = self.grad.segment(static_cast<Eigen::Index>(r) * cols, cols);
        const double dot = yr.dot(dy);
        g->segment(static_cast<Eigen::Index>(r) * cols, cols).array() += yr.array() * (dy.array() - dot);
      }
    }
  });
}

Tensor softmax(const Tensor& x) { return masked_softmax(x, {}, 1); }

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("conv1d", x, 3);
  require_rank("conv1d", w, 2);
  const int batch = x.dim(0), t_len = x.dim(1), c = x.dim(2);
  if (w.dim(0) % c != 0 || (w.dim(0) / c) % 2 == 0) shape_error("conv1d", x, w);
  const int taps = w.dim(0) / c, f = w.dim(1), pad = (taps - 1) / 2;
  if (b.shape() != Shape{f}) shape_error("conv1d(bias)", w, b);
  const int rows = batch * t_len, kc = taps * c;
  RowMatrix patches = RowMatrix::Zero(rows, kc);
  for (int bi = 0; bi < batch; ++bi) {
    for (int t = 0; t < t_len; ++t) {
      for (int k = 0; k < taps; ++k) {
        const int src = t + k - pad;
        if (src < 0 || src >= t_len) continue;
        patches.row(bi * t_len + t).segment(k * c, c) =
            x.value().segment((static_cast<Eigen::Index>(bi) * t_len + src) * c, c).transpose();
      }
    }
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows) * f);
  MatrixMap Y(y.data(), rows, f);
  Y.noalias() = patches * w.matrix();
  Y.rowwise() += b.value().transpose();
  return make_result({batch, t_len, f}, std::move(y), {x, w, b},
                     [patches = std::move(patches), batch, t_len, c, taps, f, pad, rows, kc](Node& self) {
                       const ConstMatrixMap dY(self.grad.data(), rows, f);
                       if (auto* g = parent_grad(self, 1)) MatrixMap(g->data(), kc, f).noalias() += patches.transpose() * dY;
                       if (auto* g = parent_grad(self, 2)) *g += dY.colwise().sum().transpose();
                       if (auto* g = parent_grad(self, 0)) {
                         const ConstMatrixMap W(self.parents[1]->value.data(), kc, f);
                         const RowMatrix dP = dY * W.transpose();
                         for (int bi = 0; bi < batch; ++bi)
                           for (int t = 0; t < t_len; ++t)
                             for (int k = 0; k < taps; ++k) {
                               const int src = t + k - pad;
                               if (src < 0 || src >= t_len) continue;
                               g->segment((static_cast<Eigen::Index>(bi) * t_len + src) * c, c) +=
                                   dP.row(bi * t_len + t).segment(k * c, c).transpose();
                             }
                       }
                     });
}

Tensor mean_time(const Tensor& x) {
  require_rank("mean_time", x, 3);
  const int batch = x.dim(0), t_len = x.dim(1), c = x.dim(2);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(batch) * c);
  for (int bi = 0; bi < batch; ++bi)
    for (int t = 0; t < t_len; ++t)
      y.segment(static_cast<Eigen::Index>(bi) * c, c) += x.value().segment((static_cast<Eigen::Index>(bi) * t_len + t) * c, c);
  y /= t_len;
  return make_result({batch, c}, std::move(y), {x}, [batch, t_len, c](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (int bi = 0; bi < batch; ++bi)
        for (int t = 0; t < t_len; ++t)
          g->segment((static_cast<Eigen::Index>(bi) * t_len + t) * c, c) +=
              self.grad.segment(static_cast<Eigen::Index>(bi) * c, c) / t_len;
    }
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  require_rank("gather_rows", x, 2);
  const int n = x.dim(0), d = x.dim(1), p = static_cast<int>(idx.size());
  Eigen::VectorXd y(static_cast<Eigen::Index>(p) * d);
  for (int i = 0; i < p; ++i) {
    if (idx[i] < 0 || idx[i] >= n) {
      throw ArgumentError("gather_rows: index " + std::to_string(idx[i]) + " outside " + shape_string(x.shape()));
    }
    y.segment(static_cast<Eigen::Index>(i) * d, d) = x.value().segment(static_cast<Eigen::Index>(idx[i]) * d, d);
  }
  return make_result({p, d}, std::move(y), {x}, [idx, d](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        g->segment(static_cast<Eigen::Index>(idx[i]) * d, d) += self.grad.segment(static_cast<Eigen::Index>(i) * d, d);
    }
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_rank("rowwise_dot", a, 2);
  if (a.shape() != b.shape()) shape_error("rowwise_dot", a, b);
  const int p = a.dim(0), d = a.dim(1);
  Eigen::VectorXd y = (a.matrix().array() * b.matrix().array()).rowwise().sum();
  return make_result({p}, std::move(y), {a, b}, [p, d](Node& self) {
    const ConstMatrixMap A(self.parents[0]->value.data(), p, d);
    const ConstMatrixMap B(self.parents[1]->value.data(), p, d);
    if (auto* g = parent_grad(self, 0)) MatrixMap(g->data(), p, d) += self.grad.asDiagonal() * B;
    if (auto* g = parent_grad(self, 1)) MatrixMap(g->data(), p, d) += self.grad.asDiagonal() * A;
  });
}

Tensor segment_sum(const Tensor& x, const std::vector<int>& segment, int segments) {
  if (x.rank() != 1 || static_cast<int>(segment.size()) != x.size()) {
    throw ArgumentError("segment_sum: need a vector and one segment id per entry, got " + shape_string(x.shape()));
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(segments);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] < 0 || segment[i] >= segments) throw ArgumentError("segment_sum: segment id out of range");
    y[segment[i]] += x.value()[i];
  }
  return make_result({segments}, std::move(y), {x}, [segment](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < segment.size(); ++i) (*g)[i] += self.grad[segment[i]];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: nothing to concatenate");
  const int n = parts[0].rank() == 2 ? parts[0].dim(0) : 1;
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != n) shape_error("concat_cols", parts[0], p);
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(n) * total);
  MatrixMap Y(y.data(), n, total);
  int col = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Y.middleCols(col, widths[i]) = parts[i].matrix();
    col += widths[i];
  }
  return make_result({n, total}, std::move(y), parts, [widths, n, total](Node& self) {
    const ConstMatrixMap dY(self.grad.data(), n, total);
    int col = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (auto* g = parent_grad(self, i)) MatrixMap(g->data(), n, widths[i]) += dY.middleCols(col, widths[i]);
      col += widths[i];
    }
  });
}

Tensor slice_cols(const Tensor& x, int start, int count) {
  require_rank("slice_cols", x, 2);
  const int n = x.dim(0), m = x.dim(1);
  if (start < 0 || count < 0 || start + count > m) {
    throw ArgumentError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") outside " +
                        shape_string(x.shape()));
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(n) * count);
  MatrixMap(y.data(), n, count) = x.matrix().middleCols(start, count);
  return make_result({n, count}, std::move(y), {x}, [n, m, start, count](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      MatrixMap(g->data(), n, m).middleCols(start, count) += ConstMatrixMap(self.grad.data(), n, count);
    }
  });
}

Tensor concat_seq(const Tensor& a, const Tensor& b) {
  require_rank("concat_seq", a, 3);
  require_rank("concat_seq", b, 3);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) shape_error("concat_seq", a, b);
  const int batch = a.dim(0), s1 = a.dim(1), s2 = b.dim(1), d = a.dim(2);
  const Eigen::Index la = static_cast<Eigen::Index>(s1) * d, lb = static_cast<Eigen::Index>(s2) * d;
  Eigen::VectorXd y(batch * (la + lb));
  for (int bi = 0; bi < batch; ++bi) {
    y.segment(bi * (la + lb), la) = a.value().segment(bi * la, la);
    y.segment(bi * (la + lb) + la, lb) = b.value().segment(bi * lb, lb);
  }
  return make_result({batch, s1 + s2, d}, std::move(y), {a, b}, [batch, la, lb](Node& self) {
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (int bi = 0; bi < batch; ++bi) {
      if (ga) ga->segment(bi * la, la) += self.grad.segment(bi * (la + lb), la);
      if (gb) gb->segment(bi * lb, lb) += self.grad.segment(bi * (la + lb) + la, lb);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ArgumentError("reshape: " + shape_string(x.shape()) + " cannot become " + shape_string(shape));
  }
  return make_result(std::move(shape), x.value(), {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) *g += self.grad;
  });
}

Tensor attention_scores(const Tensor& q, const Tensor& k, const Tensor& r, const Tensor& u, const Tensor& v,
                        int heads) {
  require_rank("attention_scores", q, 2);
  require_rank("attention_scores", k, 3);
  require_rank("attention_scores", r, 2);
  const int batch = q.dim(0), width = q.dim(1), slots = k.dim(1);
  if (heads < 1 || width % heads != 0) throw ArgumentError("attention_scores: width not divisible by heads");
  if (k.dim(0) != batch || k.dim(2) != width) shape_error("attention_scores(k)", q, k);
  if (r.dim(0) != slots || r.dim(1) != width) shape_error("attention_scores(r)", k, r);
  if (u.shape() != Shape{width} || v.shape() != Shape{width}) shape_error("attention_scores(u,v)", q, u);
  const int hd = width / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(hd));
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch) * heads * slots);
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& R = r.value();
  for (int b = 0; b < batch; ++b) {
    const Eigen::VectorXd qu = Q.segment(static_cast<Eigen::Index>(b) * width, width) + u.value();
    const Eigen::VectorXd qv = Q.segment(static_cast<Eigen::Index>(b) * width, width) + v.value();
    for (int h = 0; h < heads; ++h)
      for (int j = 0; j < slots; ++j) {
        const double kterm = qu.segment(h * hd, hd).dot(K.segment((static_cast<Eigen::Index>(b) * slots + j) * width + h * hd, hd));
        const double rterm = qv.segment(h * hd, hd).dot(R.segment(static_cast<Eigen::Index>(j) * width + h * hd, hd));
        y[(static_cast<Eigen::Index>(b) * heads + h) * slots + j] = s * (kterm + rterm);
      }
  }
  return make_result({batch * heads, slots}, std::move(y), {q, k, r, u, v},
                     [batch, width, slots, heads, hd, s](Node& self) {
                       const auto& Q = self.parents[0]->value;
                       const auto& K = self.parents[1]->value;
                       const auto& R = self.parents[2]->value;
                       const auto& U = self.parents[3]->value;
                       const auto& V = self.parents[4]->value;
                       auto* gq = parent_grad(self, 0);
                       auto* gk = parent_grad(self, 1);
                       auto* gr = parent_grad(self, 2);
                       auto* gu = parent_grad(self, 3);
                       auto* gv = parent_grad(self, 4);
                       for (int b = 0; b < batch; ++b)
                         for (int h = 0; h < heads; ++h)
                           for (int j = 0; j < slots; ++j) {
                             const double g = s * self.grad[(static_cast<Eigen::Index>(b) * heads + h) * slots + j];
                             if (g == 0.0) continue;
                             const Eigen::Index qo = static_cast<Eigen::Index>(b) * width + h * hd;
                             const Eigen::Index ko = (static_cast<Eigen::Index>(b) * slots + j) * width + h * hd;
                             const Eigen::Index ro = static_cast<Eigen::Index>(j) * width + h * hd;
                             if (gq) gq->segment(qo, hd) += g * (K.segment(ko, hd) + R.segment(ro, hd));
                             if (gu) gu->segment(h * hd, hd) += g * K.segment(ko, hd);
                             if (gv) gv->segment(h * hd, hd) += g * R.segment(ro, hd);
                             if (gk) gk->segment(ko, hd) += g * (Q.segment(qo, hd) + U.segment(h * hd, hd));
                             if (gr) gr->segment(ro, hd) += g * (Q.segment(qo, hd) + V.segment(h * hd, hd));
                           }
                     });
}

Tensor attention_mix(const Tensor& w, const Tensor& values, int heads) {
  require_rank("attention_mix", w, 2);
  require_rank("attention_mix", values, 3);
  const int batch = values.dim(0), slots = values.dim(1), width = values.dim(2);
  if (heads < 1 || width % heads != 0 || w.dim(0) != batch * heads || w.dim(1) != slots) {
    shape_error("attention_mix", w, values);
  }
  const int hd = width / heads;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(batch) * width);
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h)
      for (int j = 0; j < slots; ++j) {
        const double a = w.value()[(static_cast<Eigen::Index>(b) * heads + h) * slots + j];
        if (a != 0.0) {
          y.segment(static_cast<Eigen::Index>(b) * width + h * hd, hd) +=
              a * values.value().segment((static_cast<Eigen::Index>(b) * slots + j) * width + h * hd, hd);
        }
      }
  return make_result({batch, width}, std::move(y), {w, values}, [batch, slots, width, heads, hd](Node& self) {
    const auto& W = self.parents[0]->value;
    const auto& V = self.parents[1]->value;
    auto* gw = parent_grad(self, 0);
    auto* gv = parent_grad(self, 1);
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < heads; ++h) {
        const auto dy = self.grad.segment(static_cast<Eigen::Index>(b) * width + h * hd, hd);
        for (int j = 0; j < slots; ++j) {
          const Eigen::Index wi = (static_cast<Eigen::Index>(b) * heads + h) * slots + j;
          const Eigen::Index vo = (static_cast<Eigen::Index>(b) * slots + j) * width + h * hd;
          if (gw) (*gw)[wi] += dy.dot(V.segment(vo, hd));
          if (gv) gv->segment(vo, hd) += W[wi] * dy;
        }
      }
  });
}

}  // namespace clrm::nn
