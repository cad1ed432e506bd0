#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sled {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Library-wide feasibility tolerance; one value everywhere so accept/reject
// never flaps at a constraint boundary.
inline constexpr double kFeasTol = 1e-9;

// Failure kinds an oracle call can surface. The attack engine maps each of
// these onto its skip/flag path instead of aborting a run.
enum class oracle_fault {
  timeout,
  transport,
  schema,
  parse,
  decode,
  unavailable,
};

class oracle_error : public std::runtime_error {
 public:
  oracle_error(oracle_fault kind, const std::string& detail)
      : std::runtime_error(detail), kind_(kind) {}
  oracle_fault kind() const { return kind_; }

 private:
  oracle_fault kind_;
};

inline const char* oracle_fault_name(oracle_fault k) {
  switch (k) {
    case oracle_fault::timeout: return "timeout";
    case oracle_fault::transport: return "transport";
    case oracle_fault::schema: return "schema";
    case oracle_fault::parse: return "parse";
    case oracle_fault::decode: return "decode";
    case oracle_fault::unavailable: return "unavailable";
  }
  return "unknown";
}

// Deterministic seeding

// splitmix64 finalizer; used to mix (seed, question, trial) into
// independent per-trial streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

inline std::uint64_t hash_str64(const std::string& s) {
  // FNV-1a, 64-bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

// Small dense matrix (row-major)

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // rows*cols, row-major

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Byte-level helpers

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Little-endian float32, row-major. Used by both the wire envelopes and the
// on-disk blob files.
std::vector<std::uint8_t> pack_f32le(const std::vector<double>& values);
std::vector<double> unpack_f32le(const std::vector<std::uint8_t>& bytes);

}  // namespace sled
