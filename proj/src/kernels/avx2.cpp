// Compiled with -mavx2; only reached after a runtime CPU check.
#include <immintrin.h>

#include <bit>

#include "gossipq/kernels.hpp"
#include "gossipq/rng.hpp"

namespace gossipq::kernels {
namespace {

using ll = long long;

inline __m256i mullo64(__m256i a, __m256i b) {
  __m256i lo = _mm256_mul_epu32(a, b);
  __m256i ah_bl = _mm256_mul_epu32(_mm256_srli_epi64(a, 32), b);
  __m256i al_bh = _mm256_mul_epu32(a, _mm256_srli_epi64(b, 32));
  __m256i cross = _mm256_slli_epi64(_mm256_add_epi64(ah_bl, al_bh), 32);
  return _mm256_add_epi64(lo, cross);
}

inline __m256i mix64(__m256i z) {
  const __m256i m1 = _mm256_set1_epi64x(static_cast<ll>(rng::kMul1));
  const __m256i m2 = _mm256_set1_epi64x(static_cast<ll>(rng::kMul2));
  z = mullo64(_mm256_xor_si256(z, _mm256_srli_epi64(z, 30)), m1);
  z = mullo64(_mm256_xor_si256(z, _mm256_srli_epi64(z, 27)), m2);
  return _mm256_xor_si256(z, _mm256_srli_epi64(z, 31));
}

// Lanes hold node ids first + i; returns node_draw(base, id) per lane.
inline __m256i node_draw4(std::uint64_t base, std::uint64_t first) {
  const __m256i gamma = _mm256_set1_epi64x(static_cast<ll>(rng::kGamma));
  __m256i ids = _mm256_add_epi64(_mm256_set1_epi64x(static_cast<ll>(first)),
                                 _mm256_setr_epi64x(0, 1, 2, 3));
  __m256i s = _mm256_add_epi64(_mm256_set1_epi64x(static_cast<ll>(base)), mullo64(ids, gamma));
  return mix64(_mm256_add_epi64(mix64(s), gamma));
}

// High 64 bits of x * n for n < 2^32; fits in the low 32 bits of each lane.
inline __m256i mulhi_n(__m256i x, __m256i n) {
  __m256i lo = _mm256_srli_epi64(_mm256_mul_epu32(x, n), 32);
  __m256i hi = _mm256_mul_epu32(_mm256_srli_epi64(x, 32), n);
  return _mm256_srli_epi64(_mm256_add_epi64(hi, lo), 32);
}

inline __m256i min64(__m256i a, __m256i b) {
  return _mm256_blendv_epi8(a, b, _mm256_cmpgt_epi64(a, b));
}
inline __m256i max64(__m256i a, __m256i b) {
  return _mm256_blendv_epi8(b, a, _mm256_cmpgt_epi64(a, b));
}

inline __m256i gather4(const Key* values, const std::uint32_t* idx) {
  __m128i i = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx));
  return _mm256_i32gather_epi64(reinterpret_cast<const ll*>(values), i, 8);
}

inline __m256i take_mask4(const std::uint8_t* take) {
  std::uint32_t bytes;
  __builtin_memcpy(&bytes, take, 4);
  __m256i t = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(static_cast<int>(bytes)));
  return _mm256_cmpgt_epi64(t, _mm256_setzero_si256());
}

void fill_peers(std::uint64_t base, std::uint32_t first, std::size_t count, std::uint32_t n,
                std::uint32_t* out) {
  const __m256i nv = _mm256_set1_epi64x(n);
  const __m256i pack = _mm256_setr_epi32(0, 2, 4, 6, 1, 3, 5, 7);
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    __m256i r = mulhi_n(node_draw4(base, first + i), nv);
    __m256i p = _mm256_permutevar8x32_epi32(r, pack);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), _mm256_castsi256_si128(p));
  }
  for (; i < count; ++i) out[i] = rng::bounded(rng::node_draw(base, first + i), n);
}

void fill_bernoulli(std::uint64_t base, std::uint32_t first, std::size_t count,
                    std::uint64_t threshold, std::uint8_t* out) {
  const __m256i sign = _mm256_set1_epi64x(static_cast<ll>(0x8000'0000'0000'0000ULL));
  const __m256i thr = _mm256_xor_si256(_mm256_set1_epi64x(static_cast<ll>(threshold)), sign);
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    __m256i x = _mm256_xor_si256(node_draw4(base, first + i), sign);
    int bits = _mm256_movemask_pd(_mm256_castsi256_pd(_mm256_cmpgt_epi64(thr, x)));
    for (int j = 0; j < 4; ++j) out[i + j] = (bits >> j) & 1;
  }
  for (; i < count; ++i) out[i] = rng::node_draw(base, first + i) < threshold;
}

void mask_failed(std::uint32_t* peers, const std::uint8_t* failed, std::uint32_t first,
                 std::size_t count) {
  const __m256i iota = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
  std::size_t i = 0;
  for (; i + 8 <= count; i += 8) {
    __m128i f8 = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(failed + i));
    __m256i f = _mm256_cmpgt_epi32(_mm256_cvtepu8_epi32(f8), _mm256_setzero_si256());
    __m256i self = _mm256_add_epi32(_mm256_set1_epi32(static_cast<int>(first + i)), iota);
    auto* dst = reinterpret_cast<__m256i*>(peers + i);
    _mm256_storeu_si256(dst, _mm256_blendv_epi8(_mm256_loadu_si256(dst), self, f));
  }
  for (; i < count; ++i)
    if (failed[i]) peers[i] = first + static_cast<std::uint32_t>(i);
}

template <bool IsMin>
void select2(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
             const std::uint8_t* take, std::size_t count, Key* out) {
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    __m256i a = gather4(values, p1 + i);
    __m256i b = gather4(values, p2 + i);
    __m256i m = IsMin ? min64(a, b) : max64(a, b);
    __m256i r = _mm256_blendv_epi8(a, m, take_mask4(take + i));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), r);
  }
  for (; i < count; ++i) {
    Key a = values[p1[i]], b = values[p2[i]];
    out[i] = take[i] ? (IsMin ? (a < b ? a : b) : (a < b ? b : a)) : a;
  }
}

void min2(const Key* v, const std::uint32_t* p1, const std::uint32_t* p2, const std::uint8_t* t,
          std::size_t c, Key* o) {
  select2<true>(v, p1, p2, t, c, o);
}
void max2(const Key* v, const std::uint32_t* p1, const std::uint32_t* p2, const std::uint8_t* t,
          std::size_t c, Key* o) {
  select2<false>(v, p1, p2, t, c, o);
}

void median3(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
             const std::uint32_t* p3, std::size_t count, Key* out) {
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    __m256i a = gather4(values, p1 + i);
    __m256i b = gather4(values, p2 + i);
    __m256i c = gather4(values, p3 + i);
    __m256i r = max64(min64(a, b), min64(max64(a, b), c));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), r);
  }
  for (; i < count; ++i) {
    Key a = values[p1[i]], b = values[p2[i]], c = values[p3[i]];
    Key lo = a < b ? a : b, hi = a < b ? b : a;
    Key mid = hi < c ? hi : c;
    out[i] = lo < mid ? mid : lo;
  }
}

void gather(const Key* values, const std::uint32_t* peers, std::size_t count, Key* out) {
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4)
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), gather4(values, peers + i));
  for (; i < count; ++i) out[i] = values[peers[i]];
}

std::size_t count_below(const Key* keys, std::size_t count, Key cut) {
  const __m256i c = _mm256_set1_epi64x(static_cast<ll>(cut));
  std::size_t total = 0, i = 0;
  for (; i + 4 <= count; i += 4) {
    __m256i k = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(keys + i));
    int bits = _mm256_movemask_pd(_mm256_castsi256_pd(_mm256_cmpgt_epi64(c, k)));
    total += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(bits)));
  }
  for (; i < count; ++i) total += keys[i] < cut;
  return total;
}

void pull_min_max(const Key* prev_min, const Key* prev_max, const std::uint32_t* peers,
                  std::size_t count, Key* held_min, Key* held_max) {
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    auto* lo = reinterpret_cast<__m256i*>(held_min + i);
    auto* hi = reinterpret_cast<__m256i*>(held_max + i);
    _mm256_storeu_si256(lo, min64(_mm256_loadu_si256(lo), gather4(prev_min, peers + i)));
    _mm256_storeu_si256(hi, max64(_mm256_loadu_si256(hi), gather4(prev_max, peers + i)));
  }
  for (; i < count; ++i) {
    Key a = prev_min[peers[i]], b = prev_max[peers[i]];
    if (a < held_min[i]) held_min[i] = a;
    if (b > held_max[i]) held_max[i] = b;
  }
}

std::size_t count_nonzero(const std::uint8_t* bytes, std::size_t count) {
  std::size_t total = 0, i = 0;
  const __m256i zero = _mm256_setzero_si256();
  for (; i + 32 <= count; i += 32) {
    __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(bytes + i));
    auto zeros = static_cast<unsigned>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(b, zero)));
    total += 32 - static_cast<std::size_t>(std::popcount(zeros));
  }
  for (; i < count; ++i) total += bytes[i] != 0;
  return total;
}

}  // namespace

const Table& avx2_table_impl() noexcept {
  static const Table table{Backend::avx2, "avx2", fill_peers,  fill_bernoulli, mask_failed,
                           min2,          max2,   median3,     gather,         count_below,
                           pull_min_max,  count_nonzero};
  return table;
}

}  // namespace gossipq::kernels
