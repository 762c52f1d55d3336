#include "aar/nn/fft.hpp"

#include "aar/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>

namespace aar::nn {

namespace {
std::mutex & planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

RealFft::RealFft(int n) : n_(n) {
    require(n >= 2, "FFT size must be >= 2");
    std::lock_guard<std::mutex> lock(planner_mutex());
    real_buf_ = fftw_alloc_real(static_cast<std::size_t>(n));
    auto * cbuf = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    complex_buf_ = cbuf;
    plan_fwd_ = fftw_plan_dft_r2c_1d(n, real_buf_, cbuf, FFTW_ESTIMATE);
    plan_inv_ = fftw_plan_dft_c2r_1d(n, cbuf, real_buf_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
    fftw_free(real_buf_);
    fftw_free(complex_buf_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
    std::copy_n(in.begin(), n_, real_buf_);
    fftw_execute(static_cast<fftw_plan>(plan_fwd_));
    auto * c = static_cast<fftw_complex *>(complex_buf_);
    for (int k = 0; k < bins(); ++k) {
        out[k] = {c[k][0], c[k][1]};
    }
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
    auto * c = static_cast<fftw_complex *>(complex_buf_);
    for (int k = 0; k < bins(); ++k) {
        c[k][0] = in[k].real();
        c[k][1] = in[k].imag();
    }
    // c2r destroys its input; the buffer is refilled on every call.
    fftw_execute(static_cast<fftw_plan>(plan_inv_));
    std::copy_n(real_buf_, n_, out.begin());
}

RealFft & real_fft(int n) {
    thread_local std::map<int, std::unique_ptr<RealFft>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        it = cache.emplace(n, std::make_unique<RealFft>(n)).first;
    }
    return *it->second;
}

} // namespace aar::nn
