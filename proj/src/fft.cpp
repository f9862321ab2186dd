#include "cno/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "cno/error.hpp"

namespace cno {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  ~Plans() {
    if (forward) fftw_destroy_plan(forward);
    if (inverse) fftw_destroy_plan(inverse);
  }
};

const Plans& plans_for(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<Plans>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    auto p = std::make_unique<Plans>();
    std::vector<double> real(n);
    std::vector<Complex> spec(n / 2 + 1);
    auto* cspec = reinterpret_cast<fftw_complex*>(spec.data());
    // FFTW_ESTIMATE keeps plan selection, and therefore rounding, reproducible run to run.
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    p->forward = fftw_plan_dft_r2c_1d(n, real.data(), cspec, flags);
    p->inverse = fftw_plan_dft_c2r_1d(n, cspec, real.data(), flags | FFTW_DESTROY_INPUT);
    if (!p->forward || !p->inverse) throw Error("fftw: planning failed for n = " + std::to_string(n));
    slot = std::move(p);
  }
  return *slot;
}

void require_even(std::size_t n) {
  if (n < 2 || n % 2 != 0) throw ConfigError("fft: length must be even, got " + std::to_string(n));
}

}  // namespace

std::vector<Complex> rfft(std::span<const double> x) {
  require_even(x.size());
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.begin(), x.end());
  std::vector<Complex> out(n / 2 + 1);
  fftw_execute_dft_r2c(plans_for(n).forward, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> irfft(std::span<const Complex> spectrum, int n) {
  require_even(static_cast<std::size_t>(n));
  if (static_cast<int>(spectrum.size()) != n / 2 + 1) {
    throw ConfigError("irfft: spectrum has " + std::to_string(spectrum.size()) + " bins, expected " +
                      std::to_string(n / 2 + 1));
  }
  std::vector<Complex> in(spectrum.begin(), spectrum.end());
  in.front().imag(0.0);
  in.back().imag(0.0);
  std::vector<double> out(n);
  fftw_execute_dft_c2r(plans_for(n).inverse, reinterpret_cast<fftw_complex*>(in.data()), out.data());
  const double scale = 1.0 / n;
  for (double& v : out) v *= scale;
  return out;
}

Field1D spectral_derivative(const Field1D& u, int order) {
  if (order != 1 && order != 2) throw ConfigError("spectral_derivative: order must be 1 or 2");
  const int n = u.size();
  auto spec = rfft(u.values());
  const double k0 = 2.0 * std::numbers::pi / u.grid().length;
  for (int k = 0; k <= n / 2; ++k) {
    const double wk = k0 * k;
    if (order == 1) {
      spec[k] *= (k == n / 2) ? Complex(0.0, 0.0) : Complex(0.0, wk);
    } else {
      spec[k] *= -wk * wk;
    }
  }
  return Field1D(u.grid(), irfft(spec, n));
}

}  // namespace cno
