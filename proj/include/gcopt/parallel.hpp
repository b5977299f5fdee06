#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace gcopt {

// Worker-thread cap for harness-level parallelism (paired seed suites,
// verify checks). The training loop itself is sequential per run.
inline unsigned worker_thread_cap() {
    if (const char* env = std::getenv("GC_OPT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Run independent tasks on at most max_workers threads; the first task
// exception (by task index) is rethrown after all workers join.
inline void run_tasks(const std::vector<std::function<void()>>& tasks,
                      unsigned max_workers) {
    if (tasks.empty()) return;
    if (max_workers <= 1 || tasks.size() == 1) {
        for (const auto& t : tasks) t();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(tasks.size());
    const unsigned n = static_cast<unsigned>(
        std::min<std::size_t>(max_workers, tasks.size()));
    std::vector<std::thread> workers;
    workers.reserve(n);
    for (unsigned i = 0; i < n; ++i) {
        workers.emplace_back([&]() {
            while (true) {
                const std::size_t k = next.fetch_add(1);
                if (k >= tasks.size()) break;
                try {
                    tasks[k]();
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace gcopt
