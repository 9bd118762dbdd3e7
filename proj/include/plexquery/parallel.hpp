#pragma once

#include <cstddef>
#include <functional>
#include <string>

namespace plexquery {

/// Worker count used by data-parallel loops. Defaults to PLEXQUERY_THREADS when
/// set, otherwise the hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(begin, end) over contiguous chunks of [0, n). Bodies must write
/// to disjoint outputs only.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Diagnostics go to stderr unless silenced (tests silence them).
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace plexquery
