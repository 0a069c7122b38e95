// SPDX-License-Identifier: Apache-2.0
#include "hava/layers.hpp"

#include <Eigen/Core>
#include <cmath>

namespace hava::ad {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

// Unfolds one [C_in x T] input into [T_out x C_in*K] patches.
void im2col(const double* x, std::size_t cin, std::size_t t, std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t tout, RowMat& cols) {
  cols.resize(static_cast<Eigen::Index>(tout), static_cast<Eigen::Index>(cin * k));
  for (std::size_t o = 0; o < tout; ++o) {
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t j = 0; j < k; ++j) {
        const auto pos = static_cast<long long>(o * stride + j) - static_cast<long long>(pad);
        cols(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c * k + j)) =
            (pos >= 0 && pos < static_cast<long long>(t)) ? x[c * t + static_cast<std::size_t>(pos)] : 0.0;
      }
    }
  }
}

}  // namespace

Value& ParameterSet::add(const std::string& name, Value v) {
  if (index_.count(name) != 0) throw std::invalid_argument("ParameterSet: duplicate parameter '" + name + "'");
  if (!v.requires_grad()) throw std::invalid_argument("ParameterSet: '" + name + "' does not require a gradient");
  index_.emplace(name, items_.size());
  items_.emplace_back(name, std::move(v));
  return items_.back().second;
}

const Value& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParameterSet: no parameter named '" + name + "'");
  return items_[it->second].second;
}

Value& ParameterSet::get(const std::string& name) {
  return const_cast<Value&>(static_cast<const ParameterSet&>(*this).get(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : items_) n += v.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, v] : items_) v.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out(seed_);
  for (const auto& [name, v] : items_) {
    out.add(name, Value::parameter(v.shape(), std::vector<double>(v.data().begin(), v.data().end())));
  }
  return out;
}

Value glorot_uniform(std::mt19937_64& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> uni(-limit, limit);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = uni(rng);
  return Value::parameter(std::move(shape), std::move(data));
}

namespace {

// y += x * w one row at a time. Eigen's GEMM runs trailing rows through
// different kernels, so a row's result would depend on where it sits in the
// batch; here every row takes the same path and row permutations commute
// with the product bit for bit.
void rowwise_product(const double* x, const double* w, std::size_t rows, std::size_t in, std::size_t out,
                     double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y + r * out;
    const double* xr = x + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double a = xr[k];
      const double* wk = w + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += a * wk[j];
    }
  }
}

}  // namespace

Value matmul(const Value& x, const Value& w) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    shape_error("matmul", shape_string(x.shape()) + " * " + shape_string(w.shape()));
  }
  const auto rows = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out_dim = static_cast<Eigen::Index>(w.dim(1));
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim), 0.0);
  rowwise_product(x.data().data(), w.data().data(), x.dim(0), x.dim(1), w.dim(1), out.data());
  return detail::make_result("matmul", {x.dim(0), w.dim(1)}, std::move(out), {x.node_ptr(), w.node_ptr()},
                             [rows, in, out_dim](Node& self) {
                               auto& px = *self.parents[0];
                               auto& pw = *self.parents[1];
                               CMap dy(self.grad.data(), rows, out_dim);
                               if (px.requires_grad) {
                                 MMap(detail::grad_of(px).data(), rows, in).noalias() +=
                                     dy * CMap(pw.data.data(), in, out_dim).transpose();
                               }
                               if (pw.requires_grad) {
                                 MMap(detail::grad_of(pw).data(), in, out_dim).noalias() +=
                                     CMap(px.data.data(), rows, in).transpose() * dy;
                               }
                             });
}

Value dense(const Value& x, const Value& w, const Value& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    shape_error("dense", "input " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  }
  if (b.size() != w.dim(1)) shape_error("dense", "bias " + shape_string(b.shape()) + " vs weight " + shape_string(w.shape()));
  const auto rows = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out_dim = static_cast<Eigen::Index>(w.dim(1));
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim));
  for (std::size_t r = 0; r < x.dim(0); ++r) std::copy(b.data().begin(), b.data().end(), out.begin() + r * w.dim(1));
  rowwise_product(x.data().data(), w.data().data(), x.dim(0), x.dim(1), w.dim(1), out.data());
  return detail::make_result("dense", {x.dim(0), w.dim(1)}, std::move(out),
                             {x.node_ptr(), w.node_ptr(), b.node_ptr()}, [rows, in, out_dim](Node& self) {
                               auto& px = *self.parents[0];
                               auto& pw = *self.parents[1];
                               auto& pb = *self.parents[2];
                               CMap dy(self.grad.data(), rows, out_dim);
                               if (px.requires_grad) {
                                 MMap(detail::grad_of(px).data(), rows, in).noalias() +=
                                     dy * CMap(pw.data.data(), in, out_dim).transpose();
                               }
                               if (pw.requires_grad) {
                                 MMap(detail::grad_of(pw).data(), in, out_dim).noalias() +=
                                     CMap(px.data.data(), rows, in).transpose() * dy;
                               }
                               if (pb.requires_grad) {
                                 // Plain loop: Eigen's vectorized reductions round differently
                                 // from run to run depending on buffer addresses.
                                 auto& gb = detail::grad_of(pb);
                                 for (Eigen::Index r = 0; r < rows; ++r)
                                   for (Eigen::Index o = 0; o < out_dim; ++o) gb[o] += dy(r, o);
                               }
                             });
}

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw std::invalid_argument("conv1d: stride must be positive");
  const std::size_t padded = length + 2 * padding;
  if (padded < kernel) {
    throw std::invalid_argument("conv1d: input length " + std::to_string(length) + " (padding " +
                                std::to_string(padding) + ") is shorter than kernel " + std::to_string(kernel));
  }
  return (padded - kernel) / stride + 1;
}

Value conv1d(const Value& x, const Value& kernel, const Value& bias, std::size_t stride, std::size_t padding) {
  if (x.rank() != 2 && x.rank() != 3) shape_error("conv1d", "input must be [C x T] or [B x C x T]");
  if (kernel.rank() != 3) shape_error("conv1d", "kernel must be [C_out x C_in x K]");
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t t = x.dim(batched ? 2 : 1);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    shape_error("conv1d", "kernel expects " + std::to_string(kernel.dim(1)) + " input channels, got " +
                              std::to_string(cin));
  }
  if (bias.size() != cout) shape_error("conv1d", "bias size mismatch");
  const std::size_t tout = conv_output_length(t, k, stride, padding);

  std::vector<double> out(batch * cout * tout);
  CMap kmat(kernel.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * k));
  const Eigen::Map<const Eigen::VectorXd> bvec(bias.data().data(), static_cast<Eigen::Index>(cout));
  RowMat cols;
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * cin * t, cin, t, k, stride, padding, tout, cols);
    MMap y(out.data() + b * cout * tout, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(tout));
    y.noalias() = kmat * cols.transpose();
    y.colwise() += bvec;
  }
  Shape shape = batched ? Shape{batch, cout, tout} : Shape{cout, tout};
  return detail::make_result(
      "conv1d", std::move(shape), std::move(out), {x.node_ptr(), kernel.node_ptr(), bias.node_ptr()},
      [batch, cin, t, cout, k, stride, padding, tout](Node& self) {
        auto& px = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto ck = static_cast<Eigen::Index>(cin * k);
        const auto co = static_cast<Eigen::Index>(cout);
        const auto to = static_cast<Eigen::Index>(tout);
        CMap kmat(pk.data.data(), co, ck);
        RowMat cols, dcols;
        for (std::size_t b = 0; b < batch; ++b) {
          CMap dy(self.grad.data() + b * cout * tout, co, to);
          if (pk.requires_grad) {
            im2col(px.data.data() + b * cin * t, cin, t, k, stride, padding, tout, cols);
            MMap(detail::grad_of(pk).data(), co, ck).noalias() += dy * cols;
          }
          if (pb.requires_grad) {
            auto& gb = detail::grad_of(pb);
            for (Eigen::Index o = 0; o < co; ++o) {
              double acc = 0.0;
              for (Eigen::Index j = 0; j < to; ++j) acc += dy(o, j);
              gb[o] += acc;
            }
          }
          if (px.requires_grad) {
            dcols.noalias() = dy.transpose() * kmat;  // [T_out x C_in*K]
            double* dx = detail::grad_of(px).data() + b * cin * t;
            for (std::size_t o = 0; o < tout; ++o) {
              for (std::size_t c = 0; c < cin; ++c) {
                for (std::size_t j = 0; j < k; ++j) {
                  const auto pos = static_cast<long long>(o * stride + j) - static_cast<long long>(padding);
                  if (pos >= 0 && pos < static_cast<long long>(t)) {
                    dx[c * t + static_cast<std::size_t>(pos)] +=
                        dcols(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c * k + j));
                  }
                }
              }
            }
          }
        }
      });
}

Value neighbor_aggregate(const Value& h, const Adjacency& adjacency, const Value& eps) {
  if (h.rank() != 2) shape_error("graph_conv", "features must be [R x H]");
  if (eps.size() != 1) shape_error("graph_conv", "eps must be a scalar");
  const std::size_t n = adjacency.size();
  const std::size_t rows = h.dim(0), width = h.dim(1);
  if (n == 0 || rows % n != 0) {
    shape_error("graph_conv", std::to_string(rows) + " feature rows for a " + std::to_string(n) + "-vertex graph");
  }
  for (const auto& nbrs : adjacency)
    for (auto u : nbrs)
      if (u >= n) shape_error("graph_conv", "adjacency index " + std::to_string(u) + " out of range");

  const double self_w = 1.0 + eps.data()[0];
  const auto in = h.data();
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = (r / n) * n;
    double* o = out.data() + r * width;
    const double* hr = in.data() + r * width;
    for (std::size_t c = 0; c < width; ++c) o[c] = self_w * hr[c];
    for (auto u : adjacency[r % n]) {
      const double* hu = in.data() + (base + u) * width;
      for (std::size_t c = 0; c < width; ++c) o[c] += hu[c];
    }
  }
  auto adj = std::make_shared<const Adjacency>(adjacency);
  return detail::make_result("neighbor_aggregate", {rows, width}, std::move(out), {h.node_ptr(), eps.node_ptr()},
                             [adj, n, rows, width](Node& self) {
                               const Adjacency& adjacency = *adj;
                               auto& ph = *self.parents[0];
                               auto& pe = *self.parents[1];
                               const double* dy = self.grad.data();
                               if (pe.requires_grad) {
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < rows * width; ++i) acc += dy[i] * ph.data[i];
                                 detail::grad_of(pe)[0] += acc;
                               }
                               if (ph.requires_grad) {
                                 auto& g = detail::grad_of(ph);
                                 const double self_w = 1.0 + pe.data[0];
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   const std::size_t base = (r / n) * n;
                                   const double* d = dy + r * width;
                                   double* gr = g.data() + r * width;
                                   for (std::size_t c = 0; c < width; ++c) gr[c] += self_w * d[c];
                                   for (auto u : adjacency[r % n]) {
                                     double* gu = g.data() + (base + u) * width;
                                     for (std::size_t c = 0; c < width; ++c) gu[c] += d[c];
                                   }
                                 }
                               }
                             });
}

Value graph_conv(const Value& h, const Adjacency& adjacency, const Value& w, const Value& b, const Value& eps) {
  return dense(neighbor_aggregate(h, adjacency, eps), w, b);
}

namespace {

// Fused LSTM pointwise stage: gates [B x 4H] and c [B x H] -> [B x 2H] holding
// h' in the first H columns and c' in the last H.
Value lstm_pointwise(const Value& gates, const Value& c) {
  const std::size_t batch = c.dim(0), hid = c.dim(1);
  if (gates.rank() != 2 || gates.dim(0) != batch || gates.dim(1) != 4 * hid) {
    shape_error("lstm_cell", "gate shape " + shape_string(gates.shape()) + " vs state " + shape_string(c.shape()));
  }
  auto sig = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
  std::vector<double> out(batch * 2 * hid);
  for (std::size_t r = 0; r < batch; ++r) {
    const double* gr = gates.data().data() + r * 4 * hid;
    const double* cr = c.data().data() + r * hid;
    for (std::size_t j = 0; j < hid; ++j) {
      const double i = sig(gr[j]), f = sig(gr[hid + j]), g = std::tanh(gr[2 * hid + j]), o = sig(gr[3 * hid + j]);
      const double cn = f * cr[j] + i * g;
      out[r * 2 * hid + hid + j] = cn;
      out[r * 2 * hid + j] = o * std::tanh(cn);
    }
  }
  return detail::make_result(
      "lstm_cell", {batch, 2 * hid}, std::move(out), {gates.node_ptr(), c.node_ptr()},
      [batch, hid, sig](Node& self) {
        auto& pg = *self.parents[0];
        auto& pc = *self.parents[1];
        std::vector<double>* dg = pg.requires_grad ? &detail::grad_of(pg) : nullptr;
        std::vector<double>* dc = pc.requires_grad ? &detail::grad_of(pc) : nullptr;
        for (std::size_t r = 0; r < batch; ++r) {
          const double* gr = pg.data.data() + r * 4 * hid;
          const double* cr = pc.data.data() + r * hid;
          const double* cn = self.data.data() + r * 2 * hid + hid;
          const double* dh_out = self.grad.data() + r * 2 * hid;
          const double* dc_out = dh_out + hid;
          for (std::size_t j = 0; j < hid; ++j) {
            const double i = sig(gr[j]), f = sig(gr[hid + j]), g = std::tanh(gr[2 * hid + j]),
                         o = sig(gr[3 * hid + j]);
            const double tc = std::tanh(cn[j]);
            const double dcn = dc_out[j] + dh_out[j] * o * (1.0 - tc * tc);
            if (dg != nullptr) {
              double* d = dg->data() + r * 4 * hid;
              d[j] += dcn * g * i * (1.0 - i);
              d[hid + j] += dcn * cr[j] * f * (1.0 - f);
              d[2 * hid + j] += dcn * i * (1.0 - g * g);
              d[3 * hid + j] += dh_out[j] * tc * o * (1.0 - o);
            }
            if (dc != nullptr) (*dc)[r * hid + j] += dcn * f;
          }
        }
      });
}

}  // namespace

LstmState lstm_cell(const Value& x, const LstmState& state, const Value& w_ih, const Value& w_hh, const Value& b) {
  const std::size_t hid = state.h.dim(1);
  if (w_hh.rank() != 2 || w_hh.dim(0) != hid || w_hh.dim(1) != 4 * hid) {
    shape_error("lstm_cell", "recurrent weight " + shape_string(w_hh.shape()) + " for hidden size " +
                                 std::to_string(hid));
  }
  if (state.c.shape() != state.h.shape()) shape_error("lstm_cell", "h and c shapes differ");
  const auto gates = add(dense(x, w_ih, b), matmul(state.h, w_hh));
  const auto both = lstm_pointwise(gates, state.c);
  return {slice_cols(both, 0, hid), slice_cols(both, hid, hid)};
}

}  // namespace hava::ad
