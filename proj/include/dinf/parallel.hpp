#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dinf::parallel {

// Global worker cap used by every parallel kernel. Defaults to the hardware
// concurrency; the CLI sets it from --workers. Outputs are bitwise identical
// for any value, so this only trades time for cores.
int max_workers();
void set_max_workers(int n);

// Plain serial loop, kept as the reference execution for tests and the
// kernel benchmark.
template <class F>
void for_each_index_serial(std::size_t n, F&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

// Parallel map over [0, n). Iterations must touch disjoint state. Calls from
// inside an already-parallel region run serially, so nested sweeps (e.g. the
// per-batch loop inside a parallel retraining ensemble) never oversubscribe.
template <class F>
void for_each_index(std::size_t n, F&& fn) {
    const int workers = max_workers();
#ifdef _OPENMP
    if (workers <= 1 || n <= 1 || omp_in_parallel()) {
        for_each_index_serial(n, std::forward<F>(fn));
        return;
    }
#pragma omp parallel for schedule(static) num_threads(workers)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        fn(static_cast<std::size_t>(i));
    }
#else
    for_each_index_serial(n, std::forward<F>(fn));
#endif
}

// Deterministic reduction over [0, n): the range is cut into fixed-size
// blocks, each block is accumulated serially in index order, and the block
// partials are merged pairwise in a fixed tree. The arithmetic shape depends
// only on (n, block_size), never on the worker count, so results are bitwise
// reproducible on any schedule.
//
//   make()            -> Acc               fresh zero accumulator
//   accum(acc, i)                          fold index i into acc
//   combine(lhs, rhs)                      fold rhs into lhs
template <class Acc, class MakeFn, class AccumFn, class CombineFn>
Acc blocked_reduce(std::size_t n, std::size_t block_size, MakeFn make, AccumFn accum,
                   CombineFn combine) {
    if (block_size == 0) block_size = 1;
    if (n == 0) return make();
    const std::size_t blocks = (n + block_size - 1) / block_size;
    std::vector<Acc> partials;
    partials.reserve(blocks);
    for (std::size_t b = 0; b < blocks; ++b) partials.push_back(make());
    for_each_index(blocks, [&](std::size_t b) {
        const std::size_t lo = b * block_size;
        const std::size_t hi = lo + block_size < n ? lo + block_size : n;
        for (std::size_t i = lo; i < hi; ++i) accum(partials[b], i);
    });
    for (std::size_t step = 1; step < blocks; step *= 2) {
        for (std::size_t i = 0; i + step < blocks; i += 2 * step) {
            combine(partials[i], partials[i + step]);
        }
    }
    return std::move(partials.front());
}

// Default block size for example-level reductions.
inline constexpr std::size_t kDefaultBlock = 16;

}  // namespace dinf::parallel
