#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace metahpo {

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index runs
// exactly once; callers write results by index so the outcome never depends
// on the thread count. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

// Deterministic seed derivation for independent random streams.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace metahpo
