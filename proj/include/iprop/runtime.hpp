#pragma once

#include <functional>
#include <string_view>

namespace iprop {

/// Worker count for row-parallel kernels: IPROP_THREADS when set, otherwise
/// the OpenMP default. Read on every call so tests can vary it in-process.
int thread_cap();

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the process-wide warning sink (default: one line on stderr).
/// Passing an empty function restores the default. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace iprop
