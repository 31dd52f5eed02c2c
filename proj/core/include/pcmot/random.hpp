// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pcmot {

using Rng = std::mt19937_64;

// Derives an independent stream seed for a named component from the root
// seed (FNV-1a of the label mixed through splitmix64).
std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept;

inline Rng make_rng(std::uint64_t root, std::string_view label) {
    return Rng(derive_seed(root, label));
}

}  // namespace pcmot
