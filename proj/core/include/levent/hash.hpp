#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace levent {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace levent
