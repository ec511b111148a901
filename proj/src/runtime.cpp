#include "iprop/runtime.hpp"

#include <omp.h>

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

#include "iprop/error.hpp"

namespace iprop {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

WarningSink& sink_slot() {
    static WarningSink sink;
    return sink;
}

}  // namespace

int thread_cap() {
    const char* raw = std::getenv("IPROP_THREADS");
    if (raw == nullptr || *raw == '\0') return omp_get_max_threads();
    const std::string_view text(raw);
    int value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || value < 1)
        fail(ErrorKind::argument, "IPROP_THREADS must be a positive integer (got '" + std::string(text) + "')");
    return value;
}

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex());
    return std::exchange(sink_slot(), std::move(sink));
}

void warn(std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (sink_slot()) {
        sink_slot()(message);
    } else {
        std::cerr << "iprop: warning: " << message << '\n';
    }
}

}  // namespace iprop
