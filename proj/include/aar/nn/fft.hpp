#pragma once

#include <complex>
#include <span>

namespace aar::nn {

// Real-input DFT of a fixed power-of-two (or any) size backed by FFTW.
// Instances are cached per thread; see real_fft().
class RealFft {
public:
    explicit RealFft(int n);
    ~RealFft();
    RealFft(const RealFft &) = delete;
    RealFft & operator=(const RealFft &) = delete;

    int size() const { return n_; }
    int bins() const { return n_ / 2 + 1; }

    // out[k] = sum_n in[n] exp(-2 pi i k n / N), k = 0..N/2.
    void forward(std::span<const double> in, std::span<std::complex<double>> out);
    // out[n] = sum_{k=0}^{N-1} X[k] exp(+2 pi i k n / N) with Hermitian extension of
    // the N/2+1 given bins (unnormalised, imaginary parts of bins 0 and N/2 ignored).
    void inverse(std::span<const std::complex<double>> in, std::span<double> out);

private:
    int n_;
    double * real_buf_;
    void * complex_buf_;
    void * plan_fwd_;
    void * plan_inv_;
};

RealFft & real_fft(int n);

} // namespace aar::nn
