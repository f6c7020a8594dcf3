#include <atomic>
#include <cstdlib>
#include <string_view>

#include "gossipq/kernels.hpp"

namespace gossipq::kernels {

#if defined(GOSSIPQ_HAVE_AVX2)
const Table& avx2_table_impl() noexcept;
#endif

namespace {

bool cpu_has_avx2() noexcept {
#if defined(GOSSIPQ_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Table* initial() noexcept {
  const char* env = std::getenv("GOSSIPQ_KERNELS");
  std::string_view want = env ? env : "auto";
  if (want == "scalar") return &scalar_table();
  if (const Table* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const Table*>& current() noexcept {
  static std::atomic<const Table*> table{initial()};
  return table;
}

}  // namespace

const Table* avx2_table() noexcept {
#if defined(GOSSIPQ_HAVE_AVX2)
  if (cpu_has_avx2()) return &avx2_table_impl();
#endif
  return nullptr;
}

const Table& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select(Backend backend) noexcept {
  const Table* t = backend == Backend::scalar ? &scalar_table() : avx2_table();
  if (!t) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::scalar ? "scalar" : "avx2";
}

}  // namespace gossipq::kernels
