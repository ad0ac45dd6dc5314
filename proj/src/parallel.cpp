#include "dinf/parallel.hpp"

#include <atomic>
#include <thread>

namespace dinf::parallel {
namespace {

int default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int>& worker_slot() {
    static std::atomic<int> workers{default_workers()};
    return workers;
}

}  // namespace

int max_workers() { return worker_slot().load(std::memory_order_relaxed); }

void set_max_workers(int n) {
    worker_slot().store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

}  // namespace dinf::parallel
