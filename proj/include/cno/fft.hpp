#pragma once

#include <complex>
#include <span>
#include <vector>

#include "cno/grid.hpp"

namespace cno {

using Complex = std::complex<double>;

/// Real-to-complex forward transform of an even-length signal, unnormalized:
/// X_k = sum_j x_j exp(-2 pi i j k / n), k = 0 .. n/2. A constant c maps to X_0 = c * n.
std::vector<Complex> rfft(std::span<const double> x);

/// Inverse of rfft including the 1/n factor. Imaginary parts of the DC and Nyquist
/// bins are ignored, so any half spectrum yields a real signal.
std::vector<double> irfft(std::span<const Complex> spectrum, int n);

/// Spectral derivative d^order u / dx^order on the periodic grid (order 1 or 2).
/// The Nyquist bin is dropped for odd orders.
Field1D spectral_derivative(const Field1D& u, int order);

}  // namespace cno
