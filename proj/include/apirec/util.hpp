#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace apirec {

// Exit-code categories used by the CLI: 1 usage, 2 data, 3 training divergence.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class TrainingDivergence : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace util {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

// Canonical entity-name normalization: lowercase, trim, whitespace runs to a
// single hyphen, then drop anything outside [a-z0-9._-] and leading/trailing
// punctuation. Returns "" when nothing survives.
std::string normalize_name(std::string_view raw);

std::string sha256_hex(std::string_view bytes);

std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, std::string_view content);

// Unbiased draw in [0, n) from a seeded engine (rejection sampling, so the
// result does not depend on the standard library's distribution internals).
uint64_t rng_below(std::mt19937_64& rng, uint64_t n);

// Fisher-Yates with rng_below; reproducible across platforms, unlike
// std::shuffle whose output is implementation-defined.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  if (v.size() < 2) return;
  for (size_t i = v.size() - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng_below(rng, i + 1));
    std::swap(v[i], v[j]);
  }
}

double mean_of(std::span<const double> xs);

std::string timestamp_utc_compact();  // YYYYmmddTHHMMSSZ

}  // namespace util
}  // namespace apirec
