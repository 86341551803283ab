// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "preditor/common.hpp"

namespace preditor {

inline std::size_t default_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

/// Evaluates compute(i) for i in [0, count) on up to `workers` threads and
/// hands each result to collect(i, result) on the calling thread in
/// increasing i, so anything collect writes appears in index order no matter
/// how the work was scheduled. The first exception thrown by either callback
/// stops new work and is rethrown after all threads have joined.
template <class Compute, class Collect>
void ordered_parallel_for(std::size_t count, std::size_t workers, Compute&& compute, Collect&& collect) {
    using Result = std::invoke_result_t<Compute&, std::size_t>;
    if (workers == 0) workers = default_workers();
    workers = std::min(workers, std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) collect(i, compute(i));
        return;
    }

    std::mutex mu;
    std::condition_variable ready;
    std::map<std::size_t, Result> pending;
    std::exception_ptr failure;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    // Bounds how far workers may run ahead of the collector.
    const std::size_t window = 4 * workers;
    std::size_t collected = 0;
    std::condition_variable room;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || stop.load()) return;
            {
                std::unique_lock lock(mu);
                room.wait(lock, [&] { return stop.load() || i < collected + window; });
                if (stop.load()) return;
            }
            try {
                Result r = compute(i);
                std::lock_guard lock(mu);
                pending.emplace(i, std::move(r));
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                stop.store(true);
                room.notify_all();
            }
            ready.notify_one();
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);

    for (std::size_t i = 0; i < count; ++i) {
        std::optional<Result> r;
        {
            std::unique_lock lock(mu);
            ready.wait(lock, [&] { return stop.load() || pending.count(i) > 0; });
            if (pending.count(i) == 0) break;
            r.emplace(std::move(pending.at(i)));
            pending.erase(i);
        }
        try {
            collect(i, std::move(*r));
        } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
            stop.store(true);
            room.notify_all();
            break;
        }
        {
            std::lock_guard lock(mu);
            collected = i + 1;
        }
        room.notify_all();
    }
    stop.store(true);
    room.notify_all();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace preditor
