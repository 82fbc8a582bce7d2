#include "psmlab/au.hpp"

namespace psmlab {

int au_index(int au_id) {
    for (int i = 0; i < kNumAus; ++i)
        if (kAuIds[static_cast<size_t>(i)] == au_id) return i;
    return -1;
}

std::string au_name(int au_id) { return "AU" + std::to_string(au_id); }

AURecord AURecord::from_intensities(const std::array<int, kNumAus>& intensities) {
    AURecord rec;
    for (int i = 0; i < kNumAus; ++i) {
        int v = intensities[static_cast<size_t>(i)];
        if (v < 0 || v > 5)
            fail(ErrorCode::InvalidParams,
                 "AU intensity out of range [0,5]: " + std::to_string(v));
        rec.intensities[static_cast<size_t>(i)] = v;
        rec.binary[static_cast<size_t>(i)] = v > 1;
    }
    return rec;
}

}  // namespace psmlab
