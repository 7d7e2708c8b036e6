#include "agm/kernels.hpp"

#include <algorithm>

namespace agm::kernels::serial {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) {
        const double av = s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
        const double bv = s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
        acc += av * bv;
      }
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + acc : acc;
    }
  }
}

void conv1d_forward(const Conv1dShape& s, std::span<const double> x,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y) {
  const std::size_t out_len = s.out_len();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      double acc = bias.empty() ? 0.0 : bias[co];
      const std::size_t g = co / cout_g;
      for (std::size_t cl = 0; cl < cin_g; ++cl) {
        const std::size_t ci = g * cin_g + cl;
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                     static_cast<std::ptrdiff_t>(s.pad_left);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.in_len)) continue;
          acc += w[(co * cin_g + cl) * s.kernel + k] *
                 x[static_cast<std::size_t>(pos) * s.in_channels + ci];
        }
      }
      y[t * s.out_channels + co] = acc;
    }
  }
}

// Scatter form: walks the forward index map and pushes each output gradient
// back to the inputs it read.
void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  std::fill(dx.begin(), dx.end(), 0.0);
  const std::size_t out_len = s.out_len();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      const double g_out = dy[t * s.out_channels + co];
      const std::size_t g = co / cout_g;
      for (std::size_t cl = 0; cl < cin_g; ++cl) {
        const std::size_t ci = g * cin_g + cl;
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                     static_cast<std::ptrdiff_t>(s.pad_left);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.in_len)) continue;
          dx[static_cast<std::size_t>(pos) * s.in_channels + ci] +=
              g_out * w[(co * cin_g + cl) * s.kernel + k];
        }
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias) {
  std::fill(dw.begin(), dw.end(), 0.0);
  std::fill(dbias.begin(), dbias.end(), 0.0);
  const std::size_t out_len = s.out_len();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      const double g_out = dy[t * s.out_channels + co];
      if (!dbias.empty()) dbias[co] += g_out;
      const std::size_t g = co / cout_g;
      for (std::size_t cl = 0; cl < cin_g; ++cl) {
        const std::size_t ci = g * cin_g + cl;
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                     static_cast<std::ptrdiff_t>(s.pad_left);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.in_len)) continue;
          dw[(co * cin_g + cl) * s.kernel + k] +=
              g_out * x[static_cast<std::size_t>(pos) * s.in_channels + ci];
        }
      }
    }
  }
}

}  // namespace agm::kernels::serial
