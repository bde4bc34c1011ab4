#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace litd {

inline constexpr const char* kVersion = "litd 0.1.0";

// Error categories. Values mirror the status codes exposed through the C
// header; capi.cpp static-asserts the correspondence.
enum class errc : int {
  ok = 0,
  invalid_argument = 1,   // bad sizes, out-of-range vars, malformed inputs
  parse = 2,              // text formats: trees, instances, configs
  resource = 3,           // caps exceeded: pool, samples, table widths
  infeasible = 4,         // structurally impossible request (depth > domain)
  alignment = 5,          // per-vertex tree touches selector-owned bits
  train = 6,              // optimizer divergence / non-finite loss
  undefined_value = 7,    // valuation outside its exactness domain
  io = 8,                 // file read/write failures
};

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

// ---------------------------------------------------------------------------
// Seeding. Every randomized routine takes an explicit engine or a (seed, tag)
// pair; forked streams are derived with splitmix64 over the master seed and a
// tag hash so that adding or reordering consumers never perturbs siblings.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_tag(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::mt19937_64 fork_rng(uint64_t master, std::string_view tag) {
  return std::mt19937_64(splitmix64(master ^ hash_tag(tag)));
}

inline std::mt19937_64 fork_rng(uint64_t master, std::string_view tag, uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(master ^ hash_tag(tag)) + index));
}

// Uniform draw from [0, n). n must be positive.
inline uint64_t draw_below(std::mt19937_64& rng, uint64_t n) {
  return std::uniform_int_distribution<uint64_t>(0, n - 1)(rng);
}

inline bool draw_bit(std::mt19937_64& rng) { return (rng() >> 32) & 1u; }

inline double draw_unit(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace litd
