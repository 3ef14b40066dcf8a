#include "onespike/snn_kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "onespike/errors.hpp"

namespace onespike {

SpikeCode LayerActivity::code(std::size_t j) const {
  const std::uint64_t m = masks[j];
  return m ? SpikeCode{std::countr_zero(m) + 1} : SpikeCode{};
}

double LayerActivity::decoded(std::size_t j) const {
  double sum = 0.0;
  for (std::uint64_t m = masks[j]; m; m &= m - 1) sum += std::pow(base, -(std::countr_zero(m) + 1));
  return sum;
}

Shape expected_output_shape(const SnnLayer& l) {
  const Shape& in = l.in_shape;
  auto extent = [&](std::size_t n, std::size_t pad) -> std::size_t {
    const std::size_t k = l.geometry.kernel, s = l.geometry.stride;
    if (k == 0 || s == 0 || n + 2 * pad < k) throw validation_error("SNN layer geometry does not fit its input");
    return (n + 2 * pad - k) / s + 1;
  };
  switch (l.kind) {
    case SnnKind::kConv: {
      const Tensor& w = l.weights;
      if (in.size() != 3 || w.rank() != 4 || l.groups == 0 || w.dim(1) * l.groups != in[0] ||
          w.dim(0) % l.groups != 0 || w.dim(2) != l.geometry.kernel || w.dim(3) != l.geometry.kernel)
        throw validation_error("conv SNN layer weights " + shape_string(w.shape()) +
                               " do not fit input " + shape_string(in));
      return {w.dim(0), extent(in[1], l.geometry.padding), extent(in[2], l.geometry.padding)};
    }
    case SnnKind::kDense: {
      const Tensor& w = l.weights;
      if (w.rank() != 2 || in.empty() || in.size() > 2 || in.back() != w.dim(1))
        throw validation_error("dense SNN layer weights " + shape_string(w.shape()) +
                               " do not fit input " + shape_string(in));
      const std::size_t f = l.split_sign ? 2 : 1;
      if (in.size() == 1) return {f * w.dim(0)};
      return {f * in[0], w.dim(0)};
    }
    case SnnKind::kSparse: {
      if (!l.sparse || in.empty() || in.size() > 2 || in[0] != l.sparse->cols)
        throw validation_error("sparse SNN layer does not fit input " + shape_string(in));
      Shape out = in;
      out[0] = l.sparse->rows;
      return out;
    }
    case SnnKind::kMaxPool:
      if (in.size() != 3) throw validation_error("max pooling needs (C,H,W) input");
      return {in[0], extent(in[1], 0), extent(in[2], 0)};
  }
  return {};
}

namespace snn_kernels {
namespace {

/// Per-neuron accumulators: summed weights per phase for the main input and the
/// skip input, and the number of input events per phase.
struct Scratch {
  explicit Scratch(int T)
      : d(static_cast<std::size_t>(T) + 1), ds(d.size()), cnt(d.size()), cur(d.size()) {}
  std::vector<double> d, ds;
  std::vector<std::size_t> cnt;
  std::vector<double> cur;

  void clear() {
    std::fill(d.begin(), d.end(), 0.0);
    std::fill(ds.begin(), ds.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), std::size_t{0});
  }
};

inline void add_event(std::uint64_t mask, double w, double* d, std::size_t* cnt) {
  for (; mask; mask &= mask - 1) {
    const int t = std::countr_zero(mask) + 1;
    d[t] += w;
    ++cnt[t];
  }
}

/// Everything run_layer needs besides the synapse walk.
struct Context {
  const SnnLayer& layer;
  const LayerActivity& input;
  const LayerActivity* skip;
  int T;
  int w;
  std::vector<double> qp, qs, qc;

  Context(const SnnLayer& l, const LayerActivity& in, const LayerActivity* sk, int T_, int w_)
      : layer(l), input(in), skip(sk), T(T_), w(w_) {
    if (T < 1 || T > kMaxTimestep) throw validation_error("timestep out of range");
    if (w < 0) throw validation_error("wait must be non-negative");
    if (in.neurons() != element_count(l.in_shape))
      throw validation_error("input activity has " + std::to_string(in.neurons()) +
                             " neurons, layer expects " + shape_string(l.in_shape));
    if (l.skip_source.has_value() != (sk != nullptr))
      throw validation_error("skip activity missing or unexpected");
    if (sk && sk->neurons() != l.neurons()) throw validation_error("skip activity size differs");
    qp = phase_weights(in.base, T);
    qs = phase_weights(sk ? sk->base : 2.0, T);
    qc = phase_weights(l.q_cur, T);
  }

  void add_skip(std::size_t j, Scratch& s) const {
    if (!skip) return;
    const double sw = layer.skip_weight[channel_of(layer.out_shape, j)];
    add_event(skip->masks[j], sw, s.ds.data(), s.cnt.data());
  }

  /// Returns the output mask; adds to the additions counter.
  std::uint64_t finish(std::size_t j, Scratch& s, std::size_t& additions,
                       std::vector<double>* potentials) const {
    s.cur[0] = 0.0;
    for (int t = 1; t <= T; ++t) {
      const auto k = static_cast<std::size_t>(t);
      s.cur[k] = s.d[k] * qp[k] + s.ds[k] * qs[k];
    }
    const Decision dec = decide(s.cur.data(), layer.v_init[j], layer.threshold[j], qc.data(), T, w,
                                layer.fires);
    for (int t = 1; t <= dec.horizon; ++t) additions += s.cnt[static_cast<std::size_t>(t)];
    if (potentials) (*potentials)[j] = dec.potential;
    return dec.phase == SpikeCode::kNone ? 0 : std::uint64_t{1} << (dec.phase - 1);
  }
};

LayerActivity empty_output(const SnnLayer& l, std::vector<double>* potentials) {
  LayerActivity out;
  out.shape = l.out_shape;
  out.base = l.q_cur;
  out.masks.assign(l.neurons(), 0);
  if (potentials) potentials->assign(l.neurons(), 0.0);
  return out;
}

struct ConvDims {
  std::size_t c_in, h, w, c_out, ho, wo, k, stride, pad, cin_per, cout_per;
};

ConvDims conv_dims(const SnnLayer& l) {
  ConvDims d{};
  d.c_in = l.in_shape[0];
  d.h = l.in_shape[1];
  d.w = l.in_shape[2];
  d.c_out = l.out_shape[0];
  d.ho = l.out_shape[1];
  d.wo = l.out_shape[2];
  d.k = l.geometry.kernel;
  d.stride = l.geometry.stride;
  d.pad = l.geometry.padding;
  d.cin_per = l.weights.dim(1);
  d.cout_per = d.c_out / l.groups;
  return d;
}

/// Input row, output feature and sign for flat dense neuron j.
struct DenseSource {
  std::size_t row, feature;
  double sign;
};

DenseSource dense_source(const SnnLayer& l, std::size_t j) {
  const std::size_t features = l.weights.dim(0);
  const std::size_t rows = l.in_shape.size() == 1 ? 1 : l.in_shape[0];
  const std::size_t out_row = j / features;
  return {out_row % rows, j % features, out_row >= rows ? -1.0 : 1.0};
}

std::size_t sparse_width(const SnnLayer& l) {
  return l.in_shape.size() == 1 ? 1 : l.in_shape[1];
}

}  // namespace

Decision decide(const double* cur, double v_init, double threshold, const double* qpow, int T,
                int w, bool fires) {
  double u[kMaxTimestep + 1];
  u[0] = v_init;
  for (int t = 1; t <= T; ++t) u[t] = u[t - 1] + cur[t];
  if (fires) {
    for (int t = 1; t <= T; ++t) {
      const int h = std::min(t + w, T);
      if (u[h] > threshold * qpow[t]) return {t, h, u[h]};
    }
  }
  return {SpikeCode::kNone, T, u[T]};
}

LayerActivity run_maxpool(const SnnLayer& l, const LayerActivity& in) {
  LayerActivity out;
  out.shape = l.out_shape;
  out.base = in.base;
  out.masks.assign(l.neurons(), 0);
  const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
  const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
  const std::size_t k = l.geometry.kernel, s = l.geometry.stride;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        int best = SpikeCode::kNone;
        std::uint64_t mask = 0;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t i = (ch * h + y * s + ky) * w + x * s + kx;
            const SpikeCode sc = in.code(i);
            if (sc.fired() && (best == SpikeCode::kNone || sc.phase < best)) {
              best = sc.phase;
              mask = std::uint64_t{1} << (best - 1);
            }
          }
        out.masks[(ch * ho + y) * wo + x] = mask;
        out.spikes += mask != 0;
      }
  return out;
}

namespace reference {

LayerActivity run_layer(const SnnLayer& l, const LayerActivity& input, const LayerActivity* skip,
                        int T, int w, std::vector<double>* potentials) {
  const Context ctx(l, input, skip, T, w);
  LayerActivity out = empty_output(l, potentials);
  Scratch s(T);
  const std::size_t n = l.neurons();
  for (std::size_t j = 0; j < n; ++j) {
    s.clear();
    switch (l.kind) {
      case SnnKind::kConv: {
        const ConvDims d = conv_dims(l);
        const std::size_t o = j / (d.ho * d.wo);
        const std::size_t y = (j / d.wo) % d.ho, x = j % d.wo;
        const std::size_t g = o / d.cout_per;
        for (std::size_t cl = 0; cl < d.cin_per; ++cl) {
          const std::size_t c = g * d.cin_per + cl;
          for (std::size_t ky = 0; ky < d.k; ++ky)
            for (std::size_t kx = 0; kx < d.k; ++kx) {
              const long iy = static_cast<long>(y * d.stride + ky) - static_cast<long>(d.pad);
              const long ix = static_cast<long>(x * d.stride + kx) - static_cast<long>(d.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(d.h) || ix >= static_cast<long>(d.w))
                continue;
              const std::size_t i =
                  (c * d.h + static_cast<std::size_t>(iy)) * d.w + static_cast<std::size_t>(ix);
              add_event(input.masks[i], l.weights[((o * d.cin_per + cl) * d.k + ky) * d.k + kx],
                        s.d.data(), s.cnt.data());
            }
        }
        break;
      }
      case SnnKind::kDense: {
        const DenseSource src = dense_source(l, j);
        const std::size_t in_f = l.weights.dim(1);
        for (std::size_t i = 0; i < in_f; ++i)
          add_event(input.masks[src.row * in_f + i], src.sign * l.weights[src.feature * in_f + i],
                    s.d.data(), s.cnt.data());
        break;
      }
      case SnnKind::kSparse: {
        const CsrMatrix& a = *l.sparse;
        const std::size_t f_dim = sparse_width(l);
        const std::size_t r = j / f_dim, f = j % f_dim;
        for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e)
          add_event(input.masks[a.col_idx[e] * f_dim + f], a.values[e], s.d.data(), s.cnt.data());
        break;
      }
      case SnnKind::kMaxPool:
        throw validation_error("run_layer called on a max-pooling layer");
    }
    ctx.add_skip(j, s);
    out.masks[j] = ctx.finish(j, s, out.additions, potentials);
    out.spikes += out.masks[j] != 0;
  }
  return out;
}

}  // namespace reference

namespace parallel {
namespace {

// Gather per output neuron with the receptive field clipped up front. Taps are
// visited in the reference order so the sums are bit-identical.
void run_conv(const Context& ctx, LayerActivity& out, std::vector<double>* potentials) {
  const SnnLayer& l = ctx.layer;
  const ConvDims d = conv_dims(l);
  const std::size_t plane = d.ho * d.wo, kk = d.k * d.k;
  const std::uint64_t* masks = ctx.input.masks.data();
  const double* weights = l.weights.values().data();

  std::size_t additions = 0, spikes = 0;
#pragma omp parallel reduction(+ : additions, spikes)
  {
    Scratch s(ctx.T);
#pragma omp for schedule(static)
    for (long jj = 0; jj < static_cast<long>(d.c_out * plane); ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      const std::size_t o = j / plane, y = (j / d.wo) % d.ho, x = j % d.wo;
      const std::size_t g = o / d.cout_per;
      // Window rows/cols that land inside the input.
      const std::size_t y0 = y * d.stride, x0 = x * d.stride;
      const std::size_t ky_lo = d.pad > y0 ? d.pad - y0 : 0, kx_lo = d.pad > x0 ? d.pad - x0 : 0;
      const std::size_t ky_hi = std::min(d.k, d.h + d.pad - y0), kx_hi = std::min(d.k, d.w + d.pad - x0);
      s.clear();
      for (std::size_t cl = 0; cl < d.cin_per; ++cl) {
        const std::size_t c = g * d.cin_per + cl;
        const double* wk = weights + (o * d.cin_per + cl) * kk;
        for (std::size_t ky = ky_lo; ky < ky_hi; ++ky) {
          const std::uint64_t* row = masks + (c * d.h + y0 + ky - d.pad) * d.w + x0 - d.pad;
          for (std::size_t kx = kx_lo; kx < kx_hi; ++kx)
            if (row[kx]) add_event(row[kx], wk[ky * d.k + kx], s.d.data(), s.cnt.data());
        }
      }
      ctx.add_skip(j, s);
      out.masks[j] = ctx.finish(j, s, additions, potentials);
      spikes += out.masks[j] != 0;
    }
  }
  out.additions = additions;
  out.spikes = spikes;
}

void run_gather(const Context& ctx, LayerActivity& out, std::vector<double>* potentials) {
  const SnnLayer& l = ctx.layer;
  const std::size_t n = l.neurons();

  // Dense layers: active inputs per input row, ascending.
  std::vector<std::vector<std::size_t>> row_events;
  if (l.kind == SnnKind::kDense) {
    const std::size_t in_f = l.weights.dim(1);
    row_events.resize(ctx.input.neurons() / in_f);
    for (std::size_t i = 0; i < ctx.input.neurons(); ++i)
      if (ctx.input.masks[i]) row_events[i / in_f].push_back(i % in_f);
  }

  std::size_t additions = 0, spikes = 0;
#pragma omp parallel reduction(+ : additions, spikes)
  {
    Scratch s(ctx.T);
#pragma omp for schedule(static)
    for (long jj = 0; jj < static_cast<long>(n); ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      s.clear();
      if (l.kind == SnnKind::kDense) {
        const DenseSource src = dense_source(l, j);
        const std::size_t in_f = l.weights.dim(1);
        for (const std::size_t i : row_events[src.row])
          add_event(ctx.input.masks[src.row * in_f + i], src.sign * l.weights[src.feature * in_f + i],
                    s.d.data(), s.cnt.data());
      } else {
        const CsrMatrix& a = *l.sparse;
        const std::size_t f_dim = sparse_width(l);
        const std::size_t r = j / f_dim, f = j % f_dim;
        for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
          const std::uint64_t m = ctx.input.masks[a.col_idx[e] * f_dim + f];
          if (m) add_event(m, a.values[e], s.d.data(), s.cnt.data());
        }
      }
      ctx.add_skip(j, s);
      out.masks[j] = ctx.finish(j, s, additions, potentials);
      spikes += out.masks[j] != 0;
    }
  }
  out.additions = additions;
  out.spikes = spikes;
}

}  // namespace

LayerActivity run_layer(const SnnLayer& l, const LayerActivity& input, const LayerActivity* skip,
                        int T, int w, std::vector<double>* potentials) {
  const Context ctx(l, input, skip, T, w);
  LayerActivity out = empty_output(l, potentials);
  switch (l.kind) {
    case SnnKind::kConv:
      run_conv(ctx, out, potentials);
      break;
    case SnnKind::kDense:
    case SnnKind::kSparse:
      run_gather(ctx, out, potentials);
      break;
    case SnnKind::kMaxPool:
      throw validation_error("run_layer called on a max-pooling layer");
  }
  return out;
}

}  // namespace parallel
}  // namespace snn_kernels
}  // namespace onespike
