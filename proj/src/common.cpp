#include "tubekit/common.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace tubekit {

Vec::Vec(int n) : n_(n) {
    if (n < 0 || n > kMaxDim) throw Error("geometry.dimension", "dimension out of range: " + std::to_string(n));
}

Vec::Vec(std::initializer_list<double> values) : Vec(static_cast<int>(values.size())) {
    std::copy(values.begin(), values.end(), v_.begin());
}

Vec Vec::from(const std::vector<double>& values) {
    Vec v(static_cast<int>(values.size()));
    std::copy(values.begin(), values.end(), v.v_.begin());
    return v;
}

Vec Vec::unit(int n, int axis) {
    Vec v(n);
    v[axis] = 1.0;
    return v;
}

bool Vec::operator==(const Vec& o) const {
    if (n_ != o.n_) return false;
    for (int i = 0; i < n_; ++i)
        if (v_[i] != o.v_[i]) return false;
    return true;
}

double unit_ball_volume(int m) {
    return std::pow(kPi, 0.5 * m) / std::tgamma(0.5 * m + 1.0);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() { return g_threads.load(); }

void set_thread_count(int threads) { g_threads.store(std::max(1, threads)); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                    next.store(count);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace tubekit
