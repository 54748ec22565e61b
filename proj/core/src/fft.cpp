#include "fft.hpp"

#include <cstring>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace levent::detail {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct Buffer {
  explicit Buffer(std::size_t bytes) : p(fftw_malloc(bytes)) {
    if (!p) throw std::bad_alloc();
  }
  ~Buffer() { fftw_free(p); }
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;
  void* p;
};

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: length must be at least 2");
  Buffer re(sizeof(double) * n);
  Buffer cx(sizeof(fftw_complex) * (n / 2 + 1));
  std::lock_guard lock(planner_mutex());
  const int len = static_cast<int>(n);
  fwd_ = fftw_plan_dft_r2c_1d(len, static_cast<double*>(re.p), static_cast<fftw_complex*>(cx.p),
                              FFTW_ESTIMATE);
  inv_ = fftw_plan_dft_c2r_1d(len, static_cast<fftw_complex*>(cx.p), static_cast<double*>(re.p),
                              FFTW_ESTIMATE);
  if (!fwd_ || !inv_) throw std::runtime_error("FFTW planning failed");
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

void RealFft::forward(const double* in, std::complex<double>* out) const {
  Buffer re(sizeof(double) * n_);
  Buffer cx(sizeof(fftw_complex) * bins());
  std::memcpy(re.p, in, sizeof(double) * n_);
  fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), static_cast<double*>(re.p),
                       static_cast<fftw_complex*>(cx.p));
  std::memcpy(static_cast<void*>(out), cx.p, sizeof(fftw_complex) * bins());
}

void RealFft::inverse(const std::complex<double>* in, double* out) const {
  Buffer re(sizeof(double) * n_);
  Buffer cx(sizeof(fftw_complex) * bins());
  std::memcpy(cx.p, static_cast<const void*>(in), sizeof(fftw_complex) * bins());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_), static_cast<fftw_complex*>(cx.p),
                       static_cast<double*>(re.p));
  std::memcpy(out, re.p, sizeof(double) * n_);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

}  // namespace levent::detail
