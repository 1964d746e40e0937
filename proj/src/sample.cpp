#include "spader/sample.hpp"

namespace spader {

std::string_view role_name(Role role) {
    switch (role) {
        case Role::normal: return "normal";
        case Role::known_anomaly: return "known_anomaly";
        case Role::unknown_anomaly: return "unknown_anomaly";
    }
    return "unknown";
}

std::optional<Role> parse_role(std::string_view name) {
    if (name == "normal") return Role::normal;
    if (name == "known_anomaly") return Role::known_anomaly;
    if (name == "unknown_anomaly") return Role::unknown_anomaly;
    return std::nullopt;
}

}  // namespace spader
