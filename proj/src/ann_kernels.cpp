#include "onespike/ann_kernels.hpp"

#include <vector>

namespace onespike::kernels {
namespace {

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  return (in + 2 * p - k) / s + 1;
}

Shape linear_shape(const Tensor& input, std::size_t out_features, bool split) {
  if (input.rank() == 1) return {split ? 2 * out_features : out_features};
  return {split ? 2 * input.dim(0) : input.dim(0), out_features};
}

}  // namespace

namespace reference {

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              std::size_t stride, std::size_t padding) {
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = weights.dim(0), k = weights.dim(2);
  const std::size_t ho = out_extent(h, k, stride, padding);
  const std::size_t wo = out_extent(w, k, stride, padding);
  Tensor out({c_out, ho, wo});
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = bias ? (*bias)[o] : 0.0;
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(padding);
              const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(padding);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                continue;
              acc += weights[((o * c_in + c) * k + ky) * k + kx] *
                     input[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
            }
        out[(o * ho + y) * wo + x] = acc;
      }
  return out;
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor* bias,
              bool split_sign) {
  const std::size_t out_f = weights.dim(0), in_f = weights.dim(1);
  const std::size_t rows = input.rank() == 1 ? 1 : input.dim(0);
  Tensor out(linear_shape(input, out_f, split_sign));
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t j = 0; j < out_f; ++j) {
      double acc = bias ? (*bias)[j] : 0.0;
      for (std::size_t i = 0; i < in_f; ++i) acc += weights[j * in_f + i] * input[n * in_f + i];
      out[n * out_f + j] = acc;
      if (split_sign) out[(rows + n) * out_f + j] = -acc;
    }
  return out;
}

Tensor sparse_linear(const Tensor& input, const CsrMatrix& m) {
  const std::size_t feat = input.rank() == 1 ? 1 : input.dim(1);
  const std::vector<double> dense = m.to_dense();
  Shape shape = input.shape();
  shape[0] = m.rows;
  Tensor out(shape);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t f = 0; f < feat; ++f) {
      double acc = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) acc += dense[r * m.cols + c] * input[c * feat + f];
      out[r * feat + f] = acc;
    }
  return out;
}

}  // namespace reference

namespace parallel {

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              std::size_t stride, std::size_t padding) {
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = weights.dim(0), k = weights.dim(2);
  const std::size_t ho = out_extent(h, k, stride, padding);
  const std::size_t wo = out_extent(w, k, stride, padding);
  Tensor out({c_out, ho, wo});
  const double* in = input.values().data();
  const double* wt = weights.values().data();
  double* dst = out.values().data();
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  const long pad = static_cast<long>(padding);

#pragma omp parallel for schedule(static)
  for (long o = 0; o < static_cast<long>(c_out); ++o) {
    double* plane = dst + static_cast<std::size_t>(o) * ho * wo;
    const double b = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
    for (std::size_t i = 0; i < ho * wo; ++i) plane[i] = b;
    // Output-stationary accumulation in (c, ky, kx) order so every output sums its
    // terms in the same order as the reference.
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = plane[y * wo + x];
        const long y0 = static_cast<long>(y * stride) - pad;
        const long x0 = static_cast<long>(x * stride) - pad;
        for (std::size_t c = 0; c < c_in; ++c) {
          const double* wk = wt + ((static_cast<std::size_t>(o) * c_in + c) * k) * k;
          const double* ip = in + c * h * w;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = y0 + static_cast<long>(ky);
            if (iy < 0 || iy >= lh) continue;
            const double* row = ip + static_cast<std::size_t>(iy) * w;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ix = x0 + static_cast<long>(kx);
              if (ix < 0 || ix >= lw) continue;
              acc += wk[ky * k + kx] * row[ix];
            }
          }
        }
        plane[y * wo + x] = acc;
      }
    }
  }
  return out;
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor* bias,
              bool split_sign) {
  const std::size_t out_f = weights.dim(0), in_f = weights.dim(1);
  const long rows = static_cast<long>(input.rank() == 1 ? 1 : input.dim(0));
  Tensor out(linear_shape(input, out_f, split_sign));
  const double* wt = weights.values().data();
  const double* in = input.values().data();
  double* dst = out.values().data();

#pragma omp parallel for collapse(2) schedule(static)
  for (long n = 0; n < rows; ++n)
    for (long j = 0; j < static_cast<long>(out_f); ++j) {
      const double* wr = wt + static_cast<std::size_t>(j) * in_f;
      const double* xr = in + static_cast<std::size_t>(n) * in_f;
      double acc = bias ? (*bias)[static_cast<std::size_t>(j)] : 0.0;
      for (std::size_t i = 0; i < in_f; ++i) acc += wr[i] * xr[i];
      dst[static_cast<std::size_t>(n) * out_f + static_cast<std::size_t>(j)] = acc;
      if (split_sign)
        dst[static_cast<std::size_t>(rows + n) * out_f + static_cast<std::size_t>(j)] = -acc;
    }
  return out;
}

Tensor sparse_linear(const Tensor& input, const CsrMatrix& m) {
  const std::size_t feat = input.rank() == 1 ? 1 : input.dim(1);
  Shape shape = input.shape();
  shape[0] = m.rows;
  Tensor out(shape);
  const double* in = input.values().data();
  double* dst = out.values().data();

#pragma omp parallel for schedule(static)
  for (long r = 0; r < static_cast<long>(m.rows); ++r) {
    double* orow = dst + static_cast<std::size_t>(r) * feat;
    const std::size_t begin = m.row_ptr[static_cast<std::size_t>(r)];
    const std::size_t end = m.row_ptr[static_cast<std::size_t>(r) + 1];
    for (std::size_t k = begin; k < end; ++k) {
      const double a = m.values[k];
      const double* irow = in + m.col_idx[k] * feat;
      for (std::size_t f = 0; f < feat; ++f) orow[f] += a * irow[f];
    }
  }
  return out;
}

}  // namespace parallel
}  // namespace onespike::kernels
