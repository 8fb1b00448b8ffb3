#pragma once

#include <Eigen/Core>

#include <atomic>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cmtad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Matf = Mat<float>;
using Matd = Mat<double>;
using MatU8 = Mat<std::uint8_t>;
using MatI32 = Mat<std::int32_t>;

// Bad input or configuration: CLI maps this to exit code 1, anything else to 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline int effective_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Results must land in per-index slots; the
// work-stealing order is nondeterministic but the output layout is not.
template <class F>
void parallel_for(int n, int threads, F&& fn) {
    threads = effective_threads(threads);
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    threads = std::min(threads, n);
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            int i;
            while (!failed.load(std::memory_order_relaxed) && (i = next.fetch_add(1)) < n) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                    failed.store(true);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace cmtad
