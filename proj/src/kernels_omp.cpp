#include "agm/kernels.hpp"

#include <algorithm>
#include <vector>

#if defined(AGM_HAVE_OPENMP)
#include <omp.h>
#endif

namespace agm::kernels {

void set_num_threads(int n) {
#if defined(AGM_HAVE_OPENMP)
  omp_set_num_threads(n < 1 ? 1 : n);
#else
  (void)n;
#endif
}

int max_threads() {
#if defined(AGM_HAVE_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

bool openmp_enabled() {
#if defined(AGM_HAVE_OPENMP)
  return true;
#else
  return false;
#endif
}

namespace omp {

namespace {
// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(s.m);
  const bool big = s.m * s.n * s.k >= kParallelWork;
#pragma omp parallel if (big)
  {
    std::vector<double> row(s.n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < m; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      if (s.trans_b) {
        for (std::size_t j = 0; j < s.n; ++j) {
          const double* bj = b.data() + j * s.k;
          double acc = 0.0;
          if (s.trans_a) {
            for (std::size_t p = 0; p < s.k; ++p) acc += a[p * s.m + i] * bj[p];
          } else {
            const double* ai = a.data() + i * s.k;
            for (std::size_t p = 0; p < s.k; ++p) acc += ai[p] * bj[p];
          }
          row[j] = acc;
        }
      } else {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t p = 0; p < s.k; ++p) {
          const double av = s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
          const double* bp = b.data() + p * s.n;
          for (std::size_t j = 0; j < s.n; ++j) row[j] += av * bp[j];
        }
      }
      double* ci = c.data() + i * s.n;
      if (accumulate) {
        for (std::size_t j = 0; j < s.n; ++j) ci[j] += row[j];
      } else {
        std::copy(row.begin(), row.end(), ci);
      }
    }
  }
}

void conv1d_forward(const Conv1dShape& s, std::span<const double> x,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y) {
  const std::size_t out_len = s.out_len();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  const std::size_t patch = cin_g * s.kernel;
  const bool big = out_len * s.out_channels * patch >= kParallelWork;
#pragma omp parallel if (big)
  {
    // Patch laid out [in_channel_local x kernel] to match the weight rows.
    std::vector<double> cols(patch);
#pragma omp for schedule(static)
    for (std::ptrdiff_t tt = 0; tt < static_cast<std::ptrdiff_t>(out_len); ++tt) {
      const auto t = static_cast<std::size_t>(tt);
      for (std::size_t g = 0; g < s.groups; ++g) {
        for (std::size_t cl = 0; cl < cin_g; ++cl) {
          const std::size_t ci = g * cin_g + cl;
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                       static_cast<std::ptrdiff_t>(s.pad_left);
            cols[cl * s.kernel + k] =
                (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.in_len))
                    ? 0.0
                    : x[static_cast<std::size_t>(pos) * s.in_channels + ci];
          }
        }
        for (std::size_t col = 0; col < cout_g; ++col) {
          const std::size_t co = g * cout_g + col;
          const double* wr = w.data() + co * patch;
          double acc = 0.0;
          for (std::size_t q = 0; q < patch; ++q) acc += wr[q] * cols[q];
          y[t * s.out_channels + co] = acc + (bias.empty() ? 0.0 : bias[co]);
        }
      }
    }
  }
}

// Gather form: each input position collects from the outputs that read it.
void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const std::size_t out_len = s.out_len();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  const bool big = out_len * s.out_channels * cin_g * s.kernel >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t tau = 0; tau < static_cast<std::ptrdiff_t>(s.in_len); ++tau) {
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      const std::size_t g = ci / cin_g;
      const std::size_t cl = ci % cin_g;
      double acc = 0.0;
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const std::ptrdiff_t num = tau + static_cast<std::ptrdiff_t>(s.pad_left) -
                                   static_cast<std::ptrdiff_t>(k);
        if (num < 0 || num % static_cast<std::ptrdiff_t>(s.stride) != 0) continue;
        const auto t = static_cast<std::size_t>(num) / s.stride;
        if (t >= out_len) continue;
        const double* dyt = dy.data() + t * s.out_channels;
        for (std::size_t col = 0; col < cout_g; ++col) {
          const std::size_t co = g * cout_g + col;
          acc += dyt[co] * w[(co * cin_g + cl) * s.kernel + k];
        }
      }
      dx[static_cast<std::size_t>(tau) * s.in_channels + ci] = acc;
    }
  }
}

void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias) {
  const std::size_t out_len = s.out_len();
  const std::size_t cin_g = s.in_per_group();
  const std::size_t cout_g = s.out_per_group();
  const bool big = out_len * s.out_channels * cin_g * s.kernel >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(s.out_channels); ++cc) {
    const auto co = static_cast<std::size_t>(cc);
    const std::size_t g = co / cout_g;
    double* wr = dw.data() + co * cin_g * s.kernel;
    std::fill(wr, wr + cin_g * s.kernel, 0.0);
    double bacc = 0.0;
    for (std::size_t t = 0; t < out_len; ++t) {
      const double g_out = dy[t * s.out_channels + co];
      bacc += g_out;
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * s.stride + k) -
                                   static_cast<std::ptrdiff_t>(s.pad_left);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.in_len)) continue;
        const double* xp = x.data() + static_cast<std::size_t>(pos) * s.in_channels + g * cin_g;
        for (std::size_t cl = 0; cl < cin_g; ++cl) wr[cl * s.kernel + k] += g_out * xp[cl];
      }
    }
    if (!dbias.empty()) dbias[co] = bacc;
  }
}

}  // namespace omp
}  // namespace agm::kernels
