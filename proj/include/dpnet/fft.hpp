#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dpnet {

// Real-to-complex FFT of fixed length (one-sided, n/2+1 bins), FFTW-backed.
// Plans are created once under a lock with FFTW_ESTIMATE so transforms are
// reproducible run-to-run; execution on caller-owned buffers is thread-safe.
class RealFft {
 public:
  explicit RealFft(size_t n);

  size_t size() const { return n_; }
  size_t n_bins() const { return n_ / 2 + 1; }

  // out must have n_bins() entries; in must have size() entries.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;

 private:
  size_t n_;
  void* plan_;  // fftw_plan
};

// Complex-to-real inverse of the layout above, scaled by 1/n (round trip is
// the identity).  Destroys the input spectrum buffer copy internally.
class RealIfft {
 public:
  explicit RealIfft(size_t n);

  size_t size() const { return n_; }
  size_t n_bins() const { return n_ / 2 + 1; }

  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  size_t n_;
  void* plan_;
};

}  // namespace dpnet
