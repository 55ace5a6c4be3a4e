/* Copyright 2026 The sparseseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef SPARSESEG_RNG_H_
#define SPARSESEG_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>

namespace sparseseg {

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the conversions to uniform reals,
// bounded integers and normals are implemented here (Box-Muller) so the
// full stream is identical on every conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer on [0, n). n must be positive.
  std::size_t UniformInt(std::size_t n);
  // Standard normal.
  double Normal();
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

  // Independent child stream for `stream_id`, derived without consuming
  // draws from this generator.
  static Rng Derive(std::uint64_t seed, std::uint64_t stream_id);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer, used for sub-seed derivation.
std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t stream_id);

}  // namespace sparseseg

#endif  // SPARSESEG_RNG_H_
