#pragma once

// Deterministic fan-out helper: work items are assigned to workers by a
// static stride, results land in caller-owned slots indexed by item, and
// any reduction happens in item order afterwards. Outputs are therefore
// independent of the worker count.

#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace s2c {

inline int worker_count(int requested) {
    int n = requested;
    if (const char* env = std::getenv("S2C_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && (n < 1 || cap < n)) {
            n = cap;
        }
    }
    if (n < 1) {
        n = 1;
    }
    return n;
}

template <class Fn>
void parallel_for(int n, int workers, Fn fn) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += workers) {
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace s2c
