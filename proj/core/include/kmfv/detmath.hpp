#pragma once

// Reproducible double-precision math for the coding path.
//
// libm transcendentals (exp, log, erf, tanh) are not correctly rounded and
// differ between platforms and library versions. Entropy-model evaluation and
// CDF table construction must produce identical bits on the encoder and the
// decoder even when they run on different machines, so every transcendental
// used there goes through these routines. They are built only from IEEE-754
// basic operations (+, -, *, /, sqrt) and exact exponent manipulation, always
// in the same order, which makes them bit-stable on any IEEE-754 platform
// (the library is compiled with -ffp-contract=off).

namespace kmfv::detmath {

double exp_d(double x);
double log_d(double x);      // x > 0
double log1p_d(double x);    // x > -1
double erf_d(double x);
double erfc_d(double x);
double tanh_d(double x);
double sigmoid_d(double x);
double softplus_d(double x);

// Standard normal CDF, evaluated through erfc so both tails keep
// relative precision.
double normal_cdf_d(double x);

// Standard normal density.
double normal_pdf_d(double x);

} // namespace kmfv::detmath
