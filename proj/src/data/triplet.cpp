#include "prefx/data/triplet.hpp"

#include "prefx/util/error.hpp"

namespace prefx::data {

std::optional<PreferenceLabel> Triplet::label(const MechanismId& mechanism) const {
    auto it = labels.find(mechanism);
    if (it == labels.end()) return std::nullopt;
    return it->second;
}

Triplet Triplet::swapped() const {
    Triplet out = *this;
    std::swap(out.response_1, out.response_2);
    for (auto& [mech, y] : out.labels) y = -y;
    return out;
}

void validate(const Triplet& t) {
    if (t.id.empty()) throw ValidationError("triplet: empty id");
    if (t.domain.empty()) throw ValidationError("triplet " + t.id + ": empty domain");
    if (t.response_1.empty()) throw ValidationError("triplet " + t.id + ": empty response_1");
    if (t.response_2.empty()) throw ValidationError("triplet " + t.id + ": empty response_2");
    if (t.response_1 == t.response_2)
        throw ValidationError("triplet " + t.id + ": response_1 and response_2 are identical");
    for (const auto& [mech, y] : t.labels) {
        if (!is_valid_label(y))
            throw ValidationError("triplet " + t.id + ": labels." + mech + " = " +
                                  std::to_string(y) + " is not one of {1, -1, 0}");
    }
}

}  // namespace prefx::data
