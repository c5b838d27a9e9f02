#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <vector>

namespace hmme {

// Kernels come in two flavours: a plain loop kept as the reference, and an
// OpenMP loop. Both write results by index, so their outputs are identical.
enum class Execution { Serial, Parallel };

// 0 restores the OpenMP default.
void set_thread_count(int threads);
int thread_count();

// Calls body(i) for every i in [0, count). In parallel mode all indices run
// and the exception of the lowest failing index is rethrown, which matches
// what the serial loop would have reported.
template <typename Body>
void for_each_index(std::size_t count, Execution exec, Body&& body) {
  if (exec == Execution::Serial) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace hmme
