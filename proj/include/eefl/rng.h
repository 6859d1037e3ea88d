// Copyright 2026 The eefl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEFL_RNG_H_
#define EEFL_RNG_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace eefl {

/// Counter-keyed random stream.
///
/// A stream is identified by a seed plus a path of integers, for example
/// (seed, round, client). Two streams with the same key produce the same
/// sequence regardless of which thread creates them or in which order, which
/// is what makes parallel local updates bit-reproducible. The engine is the
/// standard 64-bit Mersenne twister; the variate transforms below are written
/// out so results do not depend on the standard library's distributions.
class Stream {
   public:
    explicit Stream(std::uint64_t key);

    static Stream keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    /// Standard normal variate (Marsaglia polar method).
    double normal();

   private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to fold stream keys.
std::uint64_t mix64(std::uint64_t x);

/// Stream purposes, so streams for different jobs never collide.
enum class StreamTag : std::uint64_t {
    kRoundSample = 1,
    kLocalUpdate = 2,
    kInit = 3,
    kData = 4,
    kTask = 5,
    kServing = 6,
    kProbe = 7,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace eefl

#endif  // EEFL_RNG_H_
