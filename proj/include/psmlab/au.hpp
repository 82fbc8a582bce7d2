#pragma once

#include <array>
#include <string>

#include "psmlab/common.hpp"

namespace psmlab {

inline constexpr int kNumAus = 12;

/// The 12 annotated action units, in canonical channel order.
inline constexpr std::array<int, kNumAus> kAuIds = {1, 2, 4, 5, 6, 9, 12, 15, 17, 20, 25, 26};

/// Channel position of an AU id, or -1 if it is not one of the 12.
int au_index(int au_id);
std::string au_name(int au_id);  // e.g. "AU12"

/// Per-frame AU annotation. Intensities are 0..5; the binary view is
/// intensity > 1.
struct AURecord {
    std::array<int, kNumAus> intensities{};
    std::array<bool, kNumAus> binary{};

    static AURecord from_intensities(const std::array<int, kNumAus>& intensities);
};

}  // namespace psmlab
