#include "bknet/threads.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace bknet {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(workers));
    for (int t = 0; t < workers; ++t) {
        const int lo = int(std::int64_t(n) * t / workers);
        const int hi = int(std::int64_t(n) * (t + 1) / workers);
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (requested == 0) {
        if (const char* env = std::getenv("BK_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return v;
        }
    }
    return 0;
}

}  // namespace bknet
