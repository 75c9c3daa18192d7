#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace conelab {

/// Worker count used by report-producing operations. Defaults to the
/// CONELAB_THREADS environment variable, else 1.
int default_threads();
void set_default_threads(int threads);

/// Runs body(chunk) for chunk in [0, chunks). Chunks are distributed over
/// `threads` workers; callers store per-chunk results and reduce them in
/// chunk order, so output never depends on the thread count.
void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& body, int threads = 0);

/// splitmix64 step, used to derive independent per-chunk seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace conelab
