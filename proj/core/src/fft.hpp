#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>

namespace levent::detail {

/// Real-to-complex and complex-to-real transforms of fixed length, FFTW sign
/// convention (forward e^{−i}). Unnormalized. Execution is thread-safe.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }
  /// `in`: n reals; `out`: n/2 + 1 bins.
  void forward(const double* in, std::complex<double>* out) const;
  /// `in`: n/2 + 1 bins (Hermitian half); `out`: n reals.
  void inverse(const std::complex<double>* in, double* out) const;

 private:
  std::size_t n_;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

/// SplitMix64 mixing of (seed, stream, index) into a generator seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace levent::detail
