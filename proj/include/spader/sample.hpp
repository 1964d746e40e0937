#pragma once

#include "spader/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace spader {

/// Class role of an image: normal, known anomaly (seen in training) or unknown anomaly.
enum class Role { normal, known_anomaly, unknown_anomaly };

std::string_view role_name(Role role);
std::optional<Role> parse_role(std::string_view name);

struct ImageSample {
    Tensor pixels;  // [1,H,W], values in [0,1]
    int digit = 0;
    Role role = Role::normal;
    std::uint64_t id = 0;
};

}  // namespace spader
