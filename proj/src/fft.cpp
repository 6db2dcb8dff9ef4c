#include "dpnet/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace dpnet {

namespace {

// FFTW planning is not thread-safe; executing a plan on new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan make_r2c_plan(size_t n) {
  std::lock_guard<std::mutex> lock(planner_mutex());
  static std::map<size_t, fftw_plan> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out,
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(in);
  fftw_free(out);
  if (!p) throw std::runtime_error("fftw r2c planning failed");
  cache.emplace(n, p);
  return p;
}

fftw_plan make_c2r_plan(size_t n) {
  std::lock_guard<std::mutex> lock(planner_mutex());
  static std::map<size_t, fftw_plan> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  fftw_complex* in = fftw_alloc_complex(n / 2 + 1);
  double* out = fftw_alloc_real(n);
  fftw_plan p = fftw_plan_dft_c2r_1d(static_cast<int>(n), in, out,
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(in);
  fftw_free(out);
  if (!p) throw std::runtime_error("fftw c2r planning failed");
  cache.emplace(n, p);
  return p;
}

}  // namespace

RealFft::RealFft(size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("fft: length must be > 0");
  plan_ = make_r2c_plan(n);
}

void RealFft::forward(std::span<const double> in,
                      std::span<std::complex<double>> out) const {
  if (in.size() != n_ || out.size() != n_bins())
    throw std::invalid_argument("fft: buffer size mismatch");
  // r2c destroys its input, so run from a scratch copy.
  std::vector<double> scratch(in.begin(), in.end());
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), scratch.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

RealIfft::RealIfft(size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("ifft: length must be > 0");
  plan_ = make_c2r_plan(n);
}

void RealIfft::inverse(std::span<const std::complex<double>> in,
                       std::span<double> out) const {
  if (in.size() != n_bins() || out.size() != n_)
    throw std::invalid_argument("ifft: buffer size mismatch");
  std::vector<std::complex<double>> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_),
                       reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
  const double inv_n = 1.0 / static_cast<double>(n_);
  for (double& v : out) v *= inv_n;
}

}  // namespace dpnet
