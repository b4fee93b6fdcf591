#include "dcdp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <string>

#include "dcdp/error.hpp"

namespace dcdp::ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

bool has(Var v) { return v.index != Var{}.index; }

}  // namespace

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ContractError("conv1d: stride must be >= 1");
  if (kernel == 0 || kernel > length + 2 * padding) {
    throw DimensionError("conv1d: kernel " + std::to_string(kernel) + " exceeds padded length " +
                         std::to_string(length + 2 * padding));
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

Var conv1d(Tape& tape, Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& in = tape.value(x);
  const Tensor& w = tape.value(weight);
  require_rank(in, 3, "conv1d");
  require_rank(w, 3, "conv1d kernel");
  if (in.dim(1) != w.dim(1)) {
    throw DimensionError("conv1d: kernel " + shape_string(w.shape()) + " expects " + std::to_string(w.dim(1)) +
                         " input channels but input is " + shape_string(in.shape()));
  }
  const std::size_t n_batch = in.dim(0), c_in = in.dim(1), len = in.dim(2);
  const std::size_t c_out = w.dim(0), k_len = w.dim(2);
  const std::size_t out_len = conv_output_length(len, k_len, stride, padding);
  if (has(bias) && tape.value(bias).size() != c_out) {
    throw DimensionError("conv1d: bias " + shape_string(tape.value(bias).shape()) + " for " +
                         std::to_string(c_out) + " output channels");
  }

  Tensor out({n_batch, c_out, out_len});
  const auto p = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < c_out; ++o) {
      double* dst = out.data() + (n * c_out + o) * out_len;
      if (has(bias)) std::fill(dst, dst + out_len, tape.value(bias)[o]);
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* src = in.data() + (n * c_in + c) * len;
        const double* ker = w.data() + (o * c_in + c) * k_len;
        for (std::size_t k = 0; k < k_len; ++k) {
          const double wk = ker[k];
          const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(k) - p;
          for (std::size_t t = 0; t < out_len; ++t) {
            const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * stride) + offset;
            if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(len)) dst[t] += wk * src[idx];
          }
        }
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (has(bias)) inputs.push_back(bias);
  return tape.record(std::move(out), inputs, [=](Tape& tp, const Tensor& g) {
    const Tensor& in = tp.value(x);
    const Tensor& w = tp.value(weight);
    const bool need_x = tp.requires_grad(x);
    const bool need_w = tp.requires_grad(weight);
    Tensor* gx = need_x ? &tp.grad(x) : nullptr;
    Tensor* gw = need_w ? &tp.grad(weight) : nullptr;
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t o = 0; o < c_out; ++o) {
        const double* go = g.data() + (n * c_out + o) * out_len;
        for (std::size_t c = 0; c < c_in; ++c) {
          const double* src = in.data() + (n * c_in + c) * len;
          const double* ker = w.data() + (o * c_in + c) * k_len;
          double* gsrc = need_x ? gx->data() + (n * c_in + c) * len : nullptr;
          double* gker = need_w ? gw->data() + (o * c_in + c) * k_len : nullptr;
          for (std::size_t k = 0; k < k_len; ++k) {
            const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(k) - p;
            double acc = 0.0;
            for (std::size_t t = 0; t < out_len; ++t) {
              const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * stride) + offset;
              if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(len)) continue;
              acc += go[t] * src[idx];
              if (gsrc) gsrc[idx] += go[t] * ker[k];
            }
            if (gker) gker[k] += acc;
          }
        }
      }
    }
    if (has(bias) && tp.requires_grad(bias)) {
      Tensor gb({c_out});
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t o = 0; o < c_out; ++o) {
          const double* go = g.data() + (n * c_out + o) * out_len;
          for (std::size_t t = 0; t < out_len; ++t) gb[o] += go[t];
        }
      tp.accumulate(bias, gb);
    }
  });
}

Var batchnorm1d(Tape& tape, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
  const Tensor& in = tape.value(x);
  require_rank(in, 3, "batchnorm1d");
  const std::size_t n_batch = in.dim(0), channels = in.dim(1), len = in.dim(2);
  if (tape.value(gamma).size() != channels || tape.value(beta).size() != channels ||
      state.running_mean.size() != channels) {
    throw DimensionError("batchnorm1d: parameters sized for " + std::to_string(tape.value(gamma).size()) +
                         " channels, input " + shape_string(in.shape()));
  }
  const std::size_t count = n_batch * len;
  if (mode == Mode::kTrain && count < 2) {
    throw DegenerateBatchError("batchnorm1d: train mode needs at least 2 values per channel, got " +
                               std::to_string(count) + " for input " + shape_string(in.shape()));
  }

  auto xhat = std::make_shared<Tensor>(in.shape());
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  const Tensor& g = tape.value(gamma);
  const Tensor& b = tape.value(beta);
  Tensor out(in.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t t = 0; t < len; ++t) s += in.at(n, c, t);
      mean = s / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t t = 0; t < len; ++t) {
          const double d = in.at(n, c, t) - mean;
          sq += d * d;
        }
      var = sq / static_cast<double>(count);
      state.running_mean[c] = state.decay * state.running_mean[c] + (1.0 - state.decay) * mean;
      state.running_var[c] = state.decay * state.running_var[c] + (1.0 - state.decay) * var;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + state.eps);
    (*inv_std)[c] = is;
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t t = 0; t < len; ++t) {
        const double h = (in.at(n, c, t) - mean) * is;
        xhat->at(n, c, t) = h;
        out.at(n, c, t) = g[c] * h + b[c];
      }
  }

  return tape.record(std::move(out), {x, gamma, beta}, [=](Tape& tp, const Tensor& go) {
    const Tensor& gm = tp.value(gamma);
    Tensor dgamma({channels}), dbeta({channels});
    const bool need_x = tp.requires_grad(x);
    Tensor* gx = need_x ? &tp.grad(x) : nullptr;
    const double m = static_cast<double>(count);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t t = 0; t < len; ++t) {
          sum_g += go.at(n, c, t);
          sum_gx += go.at(n, c, t) * xhat->at(n, c, t);
        }
      dgamma[c] = sum_gx;
      dbeta[c] = sum_g;
      if (!need_x) continue;
      const double is = (*inv_std)[c];
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t t = 0; t < len; ++t) {
          if (mode == Mode::kTrain) {
            // d/dx of gamma * (x - mean) * inv_std with batch mean/var
            gx->at(n, c, t) += gm[c] * is / m * (m * go.at(n, c, t) - sum_g - xhat->at(n, c, t) * sum_gx);
          } else {
            gx->at(n, c, t) += gm[c] * is * go.at(n, c, t);
          }
        }
    }
    tp.accumulate(gamma, dgamma);
    tp.accumulate(beta, dbeta);
  });
}

namespace {
thread_local ReluMarginProbe* active_probe = nullptr;
}  // namespace

ReluMarginProbe::ReluMarginProbe()
    : previous_(active_probe), min_abs_(std::numeric_limits<double>::infinity()) {
  active_probe = this;
}

ReluMarginProbe::~ReluMarginProbe() { active_probe = previous_; }

void ReluMarginProbe::observe(const Tensor& input) {
  for (double v : input.values()) min_abs_ = std::min(min_abs_, std::abs(v));
  seen_ += input.size();
  if (previous_) previous_->observe(input);
}

Var relu(Tape& tape, Var x) {
  if (active_probe) active_probe->observe(tape.value(x));
  Tensor out = tape.value(x);
  for (double& v : out.storage()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return tape.record(std::move(out), {x}, [=](Tape& tp, const Tensor& g) {
    const Tensor& in = tp.value(x);
    Tensor& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var linear(Tape& tape, Var x, Var weight, Var bias) {
  const Tensor& in = tape.value(x);
  const Tensor& w = tape.value(weight);
  require_rank(in, 2, "linear");
  require_rank(w, 2, "linear weight");
  if (in.dim(1) != w.dim(1)) {
    throw DimensionError("linear: input " + shape_string(in.shape()) + " incompatible with weight " +
                         shape_string(w.shape()));
  }
  const std::size_t rows = in.dim(0), d_in = in.dim(1), d_out = w.dim(0);
  if (has(bias) && tape.value(bias).size() != d_out) {
    throw DimensionError("linear: bias " + shape_string(tape.value(bias).shape()) + " for output dim " +
                         std::to_string(d_out));
  }
  Tensor out({rows, d_out});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < d_out; ++o) {
      double acc = has(bias) ? tape.value(bias)[o] : 0.0;
      const double* xr = in.data() + r * d_in;
      const double* wr = w.data() + o * d_in;
      for (std::size_t i = 0; i < d_in; ++i) acc += xr[i] * wr[i];
      out.at(r, o) = acc;
    }
  std::vector<Var> inputs{x, weight};
  if (has(bias)) inputs.push_back(bias);
  return tape.record(std::move(out), inputs, [=](Tape& tp, const Tensor& g) {
    const Tensor& in = tp.value(x);
    const Tensor& w = tp.value(weight);
    if (tp.requires_grad(x)) {
      Tensor& gx = tp.grad(x);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < d_out; ++o) {
          const double go = g.at(r, o);
          for (std::size_t i = 0; i < d_in; ++i) gx.at(r, i) += go * w.at(o, i);
        }
    }
    if (tp.requires_grad(weight)) {
      Tensor& gw = tp.grad(weight);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < d_out; ++o) {
          const double go = g.at(r, o);
          for (std::size_t i = 0; i < d_in; ++i) gw.at(o, i) += go * in.at(r, i);
        }
    }
    if (has(bias) && tp.requires_grad(bias)) {
      Tensor gb({d_out});
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < d_out; ++o) gb[o] += g.at(r, o);
      tp.accumulate(bias, gb);
    }
  });
}

Var global_avg_pool(Tape& tape, Var x) {
  const Tensor& in = tape.value(x);
  require_rank(in, 3, "global_avg_pool");
  const std::size_t n_batch = in.dim(0), channels = in.dim(1), len = in.dim(2);
  if (len == 0) throw DimensionError("global_avg_pool: empty temporal axis");
  Tensor out({n_batch, channels});
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < len; ++t) s += in.at(n, c, t);
      out.at(n, c) = s / static_cast<double>(len);
    }
  return tape.record(std::move(out), {x}, [=](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(x);
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = g.at(n, c) * inv;
        for (std::size_t t = 0; t < len; ++t) gx.at(n, c, t) += v;
      }
  });
}

Var avg_pool1d(Tape& tape, Var x, std::size_t kernel) {
  const Tensor& in = tape.value(x);
  require_rank(in, 3, "avg_pool1d");
  const std::size_t n_batch = in.dim(0), channels = in.dim(1), len = in.dim(2);
  if (kernel == 0 || len < kernel) {
    throw DimensionError("avg_pool1d: kernel " + std::to_string(kernel) + " longer than input " +
                         shape_string(in.shape()));
  }
  const std::size_t out_len = len / kernel;
  const double inv = 1.0 / static_cast<double>(kernel);
  Tensor out({n_batch, channels, out_len});
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < out_len; ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k < kernel; ++k) s += in.at(n, c, t * kernel + k);
        out.at(n, c, t) = s * inv;
      }
  return tape.record(std::move(out), {x}, [=](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(x);
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t t = 0; t < out_len; ++t)
          for (std::size_t k = 0; k < kernel; ++k) gx.at(n, c, t * kernel + k) += g.at(n, c, t) * inv;
  });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, logits.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(logits.at(r, c) - mx);
      out.at(r, c) = e;
      s += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= s;
  }
  return out;
}

Var softmax(Tape& tape, Var logits) {
  Tensor out = softmax_rows(tape.value(logits));
  const std::size_t rows = out.dim(0), cols = out.dim(1);
  auto probs = std::make_shared<Tensor>(out);
  return tape.record(std::move(out), {logits}, [=](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(logits);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * probs->at(r, c);
      for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += probs->at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var log_softmax(Tape& tape, Var logits) {
  const Tensor& in = tape.value(logits);
  require_rank(in, 2, "log_softmax");
  const std::size_t rows = in.dim(0), cols = in.dim(1);
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, in.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in.at(r, c) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = in.at(r, c) - lse;
  }
  auto logp = std::make_shared<Tensor>(out);
  return tape.record(std::move(out), {logits}, [=](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(logits);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += g.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += g.at(r, c) - std::exp(logp->at(r, c)) * gs;
    }
  });
}

Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
  const Tensor& in = tape.value(logits);
  require_rank(in, 2, "cross_entropy");
  const std::size_t rows = in.dim(0), cols = in.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(in.shape()));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols) {
      throw LabelError("cross_entropy: label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0," + std::to_string(cols) + ")");
    }
  }
  auto probs = std::make_shared<Tensor>(softmax_rows(in));
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, in.at(i, c));
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in.at(i, c) - mx);
    loss += mx + std::log(s) - in.at(i, static_cast<std::size_t>(labels[i]));
  }
  loss /= static_cast<double>(rows);
  auto label_copy = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  return tape.record(Tensor::scalar(loss), {logits}, [=](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(logits);
    const double f = g[0] / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t c = 0; c < cols; ++c) {
        const double target = static_cast<std::size_t>((*label_copy)[i]) == c ? 1.0 : 0.0;
        gx.at(i, c) += f * (probs->at(i, c) - target);
      }
  });
}

Var mse(Tape& tape, Var a, Var b) {
  const Tensor& ta = tape.value(a);
  const Tensor& tb = tape.value(b);
  require_same_shape(ta, tb, "mse");
  if (ta.empty()) throw ContractError("mse: empty inputs");
  const double n = static_cast<double>(ta.size());
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double d = ta[i] - tb[i];
    s += d * d;
  }
  return tape.record(Tensor::scalar(s / n), {a, b}, [=](Tape& tp, const Tensor& g) {
    const Tensor& ta = tp.value(a);
    const Tensor& tb = tp.value(b);
    Tensor diff(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) diff[i] = 2.0 * (ta[i] - tb[i]) / n * g[0];
    tp.accumulate(a, diff);
    for (double& v : diff.storage()) v = -v;
    tp.accumulate(b, diff);
  });
}

Var l2_normalize(Tape& tape, Var v, double eps) {
  const Tensor& in = tape.value(v);
  require_rank(in, 2, "l2_normalize");
  const std::size_t rows = in.dim(0), cols = in.dim(1);
  auto denom = std::make_shared<std::vector<double>>(rows);
  auto clamped = std::make_shared<std::vector<bool>>(rows);
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += in.at(r, c) * in.at(r, c);
    const double norm = std::sqrt(sq);
    (*clamped)[r] = norm <= eps;
    (*denom)[r] = std::max(norm, eps);
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = in.at(r, c) / (*denom)[r];
  }
  auto y = std::make_shared<Tensor>(out);
  return tape.record(std::move(out), {v}, [=](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(v);
    for (std::size_t r = 0; r < rows; ++r) {
      const double inv = 1.0 / (*denom)[r];
      double dot = 0.0;
      if (!(*clamped)[r]) {
        for (std::size_t c = 0; c < cols; ++c) dot += y->at(r, c) * g.at(r, c);
      }
      for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += (g.at(r, c) - y->at(r, c) * dot) * inv;
    }
  });
}

Var concat(Tape& tape, Var a, Var b, std::size_t axis) { return concat(tape, std::vector<Var>{a, b}, axis); }

Var concat(Tape& tape, const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = tape.value(parts[0]).shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    const Shape& s = tape.value(p).shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: cannot join " + shape_string(first) + " and " + shape_string(s) +
                           " on axis " + std::to_string(axis));
    }
    widths.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t total = out_shape[axis];

  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& src = tape.value(parts[i]);
    const std::size_t chunk = widths[i] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * total + offset) * inner, src.data() + o * chunk, chunk * sizeof(double));
    }
    offset += widths[i];
  }
  return tape.record(std::move(out), parts, [=](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (tp.requires_grad(parts[i])) {
        Tensor& gp = tp.grad(parts[i]);
        const std::size_t chunk = widths[i] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = g.data() + (o * total + off) * inner;
          double* dst = gp.data() + o * chunk;
          for (std::size_t k = 0; k < chunk; ++k) dst[k] += src[k];
        }
      }
      off += widths[i];
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& ta = tape.value(a);
  const Tensor& tb = tape.value(b);
  require_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  return tape.record(std::move(out), {a, b}, [=](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var scale(Tape& tape, Var a, double factor) {
  Tensor out = tape.value(a);
  for (double& v : out.storage()) v *= factor;
  return tape.record(std::move(out), {a}, [=](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var sum(Tape& tape, Var a) {
  double s = 0.0;
  for (double v : tape.value(a).values()) s += v;
  return tape.record(Tensor::scalar(s), {a}, [=](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    for (double& v : ga.storage()) v += g[0];
  });
}

Var matmul_nt(Tape& tape, Var a, Var b) {
  const Tensor& ta = tape.value(a);
  const Tensor& tb = tape.value(b);
  require_rank(ta, 2, "matmul_nt");
  require_rank(tb, 2, "matmul_nt");
  if (ta.dim(1) != tb.dim(1)) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_string(ta.shape()) + " vs " +
                         shape_string(tb.shape()));
  }
  const std::size_t n = ta.dim(0), m = tb.dim(0), d = ta.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += ta.at(i, k) * tb.at(j, k);
      out.at(i, j) = acc;
    }
  return tape.record(std::move(out), {a, b}, [=](Tape& tp, const Tensor& g) {
    const Tensor& ta = tp.value(a);
    const Tensor& tb = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t k = 0; k < d; ++k) ga.at(i, k) += g.at(i, j) * tb.at(j, k);
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t k = 0; k < d; ++k) gb.at(j, k) += g.at(i, j) * ta.at(i, k);
    }
  });
}

Var transpose(Tape& tape, Var a) {
  const Tensor& ta = tape.value(a);
  require_rank(ta, 2, "transpose");
  const std::size_t n = ta.dim(0), m = ta.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(j, i) = ta.at(i, j);
  return tape.record(std::move(out), {a}, [=](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var diagonal(Tape& tape, Var a) {
  const Tensor& ta = tape.value(a);
  require_rank(ta, 2, "diagonal");
  if (ta.dim(0) != ta.dim(1)) throw DimensionError("diagonal: matrix " + shape_string(ta.shape()) + " is not square");
  const std::size_t n = ta.dim(0);
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = ta.at(i, i);
  return tape.record(std::move(out), {a}, [=](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < n; ++i) ga.at(i, i) += g[i];
  });
}

}  // namespace dcdp::ops
