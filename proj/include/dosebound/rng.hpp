#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dosebound {

/// Expand one root seed into named, independent substreams so that adding
/// draws in one component never perturbs another.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

std::mt19937_64 make_stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

}  // namespace dosebound
