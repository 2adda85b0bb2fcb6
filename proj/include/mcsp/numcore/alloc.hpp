// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <type_traits>
#include <utility>

namespace mcsp {

/// Per-thread byte accounting for tensor buffers allocated inside a
/// measurement region. Buffers allocated outside the active region are never
/// counted, even if they are released inside it.
struct AllocCounter {
  std::int64_t current_bytes = 0;
  std::int64_t peak_bytes = 0;
};

namespace detail {
void* tracked_allocate(std::size_t bytes);
void tracked_deallocate(void* p) noexcept;
std::uint64_t begin_tracking();
AllocCounter end_tracking(std::uint64_t region);
}  // namespace detail

/// Current thread's counter (zeroed when no region is active).
AllocCounter current_alloc_counter();

template <class T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(detail::tracked_allocate(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t) noexcept { detail::tracked_deallocate(p); }

  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Runs `work` inside a fresh tracking region on the calling thread and
/// returns its result together with the peak number of tensor-buffer bytes
/// that were live at once. Throws UsageError if a region is already active.
template <class Work>
auto with_alloc_tracking(Work&& work) {
  struct Guard {
    std::uint64_t region;
    AllocCounter result{};
    bool done = false;
    ~Guard() {
      if (!done) detail::end_tracking(region);
    }
  } guard{detail::begin_tracking()};

  if constexpr (std::is_void_v<std::invoke_result_t<Work>>) {
    std::forward<Work>(work)();
    guard.done = true;
    return detail::end_tracking(guard.region).peak_bytes;
  } else {
    auto result = std::forward<Work>(work)();
    guard.done = true;
    auto peak = detail::end_tracking(guard.region).peak_bytes;
    return std::pair{std::move(result), peak};
  }
}

}  // namespace mcsp
