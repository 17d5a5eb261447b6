#pragma once

#include <fftw3.h>

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>

namespace tbl::fft {

/// FFTW's planner is not re-entrant; every plan creation and destruction goes
/// through this lock. Executing an existing plan on new arrays is safe.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwDeleter {
    void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwArray = std::unique_ptr<T[], FftwDeleter>;

inline FftwArray<double> alloc_real(std::size_t n) {
    return FftwArray<double>(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
}

inline FftwArray<fftw_complex> alloc_complex(std::size_t n) {
    return FftwArray<fftw_complex>(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

/// Smallest 2^a 3^b 5^c that is >= n.
inline std::size_t good_size(std::size_t n) {
    std::size_t best = 1;
    while (best < n) best *= 2;
    for (std::size_t p5 = 1; p5 < best; p5 *= 5) {
        for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
            std::size_t v = p35;
            while (v < n) v *= 2;
            if (v < best) best = v;
        }
    }
    return best;
}

/// Real-to-complex and complex-to-real plans for one transform size, with
/// scratch buffers. Not shared between threads (see `workspace_for`).
class RealTransform {
public:
    explicit RealTransform(std::size_t n)
        : n_(n), real_(alloc_real(n)), spec_(alloc_complex(n / 2 + 1)) {
        std::lock_guard lock(planner_mutex());
        forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_.get(), spec_.get(), FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_.get(), real_.get(), FFTW_ESTIMATE);
    }
    ~RealTransform() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
    }
    RealTransform(const RealTransform&) = delete;
    RealTransform& operator=(const RealTransform&) = delete;

    std::size_t size() const { return n_; }
    std::size_t bins() const { return n_ / 2 + 1; }

    void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_, in, out); }
    // Unnormalized: the result is scaled by size().
    void inverse(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(inverse_, in, out); }

private:
    std::size_t n_;
    FftwArray<double> real_;
    FftwArray<fftw_complex> spec_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

/// Per-thread cache of transforms keyed by size.
inline RealTransform& workspace_for(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<RealTransform>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<RealTransform>(n);
    return *slot;
}

}  // namespace tbl::fft
