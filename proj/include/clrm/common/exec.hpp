#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>

namespace clrm {

/// Selects the serial reference loop or the OpenMP-parallel loop for batch kernels.
/// Both paths must produce bit-identical results; the serial one is kept for tests.
enum class Exec { serial, parallel };

/// Worker-pool size: CLRM_WORKERS if set (>= 1), otherwise the OpenMP default.
int worker_count();

/// Runs body(i) for i in [0, n). Exceptions thrown by any iteration are rethrown
/// (first one wins) after the loop completes.
template <class Body>
void for_each_index(Exec exec, std::size_t n, Body&& body) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const long count = static_cast<long>(n);
  const int threads = worker_count();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

/// splitmix64 finalizer; derives independent stream seeds from (base, stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace clrm
