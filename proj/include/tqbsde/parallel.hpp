#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace tqbsde::parallel {

// Worker count is a process-global knob. 0 means "use hardware concurrency".
// All parallel loops in the library partition work into fixed-size chunks and
// combine per-chunk results in chunk order, so numerical output is identical
// for every worker count.
inline int& worker_count_ref() {
    static int count = 0;
    return count;
}

inline void set_worker_count(int count) { worker_count_ref() = count < 0 ? 0 : count; }

inline int worker_count() {
    int count = worker_count_ref();
    if (count > 0) return count;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

constexpr std::size_t kDefaultChunk = 4096;

/// Runs fn(chunk_index, begin, end) over [0, count) split into fixed chunks.
/// Chunks are assigned to workers round-robin; each chunk must only write to
/// state owned by its chunk index.
template <typename Fn>
void for_chunks(std::size_t count, std::size_t chunk_size, Fn&& fn) {
    if (count == 0) return;
    if (chunk_size == 0) chunk_size = kDefaultChunk;
    const std::size_t n_chunks = (count + chunk_size - 1) / chunk_size;
    const int workers = std::min<int>(worker_count(), static_cast<int>(n_chunks));

    auto run_range = [&](std::size_t chunk_begin, std::size_t stride) {
        for (std::size_t c = chunk_begin; c < n_chunks; c += stride) {
            const std::size_t begin = c * chunk_size;
            const std::size_t end = std::min(begin + chunk_size, count);
            fn(c, begin, end);
        }
    };

    if (workers <= 1) {
        run_range(0, 1);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back(run_range, static_cast<std::size_t>(w),
                          static_cast<std::size_t>(workers));
    }
    for (auto& t : pool) t.join();
}

inline std::size_t chunk_count(std::size_t count, std::size_t chunk_size = kDefaultChunk) {
    if (chunk_size == 0) chunk_size = kDefaultChunk;
    return count == 0 ? 0 : (count + chunk_size - 1) / chunk_size;
}

}  // namespace tqbsde::parallel
