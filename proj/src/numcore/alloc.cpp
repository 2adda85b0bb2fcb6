// SPDX-License-Identifier: Apache-2.0
#include "mcsp/numcore/alloc.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "mcsp/error.hpp"

namespace mcsp {
namespace {

// Every tracked block carries a 16-byte header holding the region id that
// was active at allocation time (0 = none), so frees of foreign blocks are
// ignored by the counter.
constexpr std::size_t kHeader = 16;

std::atomic<std::uint64_t> g_next_region{1};

struct ThreadState {
  std::uint64_t region = 0;
  AllocCounter counter;
};

thread_local ThreadState t_state;

}  // namespace

namespace detail {

void* tracked_allocate(std::size_t bytes) {
  void* raw = std::malloc(bytes + kHeader);
  if (raw == nullptr) throw std::bad_alloc();
  auto* header = static_cast<unsigned char*>(raw);
  std::uint64_t region = t_state.region;
  std::uint64_t size = bytes;
  std::memcpy(header, &region, sizeof region);
  std::memcpy(header + 8, &size, sizeof size);
  if (region != 0) {
    t_state.counter.current_bytes += static_cast<std::int64_t>(bytes);
    if (t_state.counter.current_bytes > t_state.counter.peak_bytes) {
      t_state.counter.peak_bytes = t_state.counter.current_bytes;
    }
  }
  return header + kHeader;
}

void tracked_deallocate(void* p) noexcept {
  if (p == nullptr) return;
  auto* header = static_cast<unsigned char*>(p) - kHeader;
  std::uint64_t region = 0;
  std::uint64_t size = 0;
  std::memcpy(&region, header, sizeof region);
  std::memcpy(&size, header + 8, sizeof size);
  if (region != 0 && region == t_state.region) {
    t_state.counter.current_bytes -= static_cast<std::int64_t>(size);
  }
  std::free(header);
}

std::uint64_t begin_tracking() {
  if (t_state.region != 0) {
    throw UsageError("allocation tracking regions cannot nest");
  }
  t_state.region = g_next_region.fetch_add(1, std::memory_order_relaxed);
  t_state.counter = AllocCounter{};
  return t_state.region;
}

AllocCounter end_tracking(std::uint64_t region) {
  AllocCounter out{};
  if (t_state.region == region) {
    out = t_state.counter;
    t_state.region = 0;
    t_state.counter = AllocCounter{};
  }
  return out;
}

}  // namespace detail

AllocCounter current_alloc_counter() { return t_state.counter; }

}  // namespace mcsp
