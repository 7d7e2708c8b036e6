#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels behind the autodiff ops.
//
// Two implementations share each signature: `serial` holds the textbook
// loops kept as the reference for tests, `omp` holds the OpenMP versions used
// at runtime. The parallel loops give every output element to exactly one
// thread and keep a fixed reduction order, so results do not depend on the
// thread count.

namespace agm::kernels {

/// Geometry of a channel-last 1-D convolution.
/// x: [in_len x in_channels], w: [out_channels x in_channels/groups x kernel],
/// y: [out_len x out_channels].
struct Conv1dShape {
  std::size_t in_len = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t groups = 1;

  std::size_t out_len() const {
    return (in_len + pad_left + pad_right - kernel) / stride + 1;
  }
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
};

/// c[m x n] (+)= op(a) * op(b), op = optional transpose.
/// a is [m x k] (or [k x m] when trans_a), b is [k x n] (or [n x k] when trans_b).
struct GemmShape {
  std::size_t m = 0, n = 0, k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

namespace serial {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void conv1d_forward(const Conv1dShape& s, std::span<const double> x,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y);
void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);
}  // namespace serial

namespace omp {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void conv1d_forward(const Conv1dShape& s, std::span<const double> x,
                    std::span<const double> w, std::span<const double> bias,
                    std::span<double> y);
void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);
}  // namespace omp

// Runtime entry points.
using omp::conv1d_backward_input;
using omp::conv1d_backward_weight;
using omp::conv1d_forward;
using omp::gemm;

void set_num_threads(int n);
int max_threads();
bool openmp_enabled();

}  // namespace agm::kernels
