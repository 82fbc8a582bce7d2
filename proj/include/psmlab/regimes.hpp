#pragma once

// Training orchestration: per-person models (PSM), one group model (GM),
// fine-tuning transfers between them, and the curriculum pair sampler that
// grows the temporal distance between training pairs over epochs.

#include <functional>
#include <optional>
#include <string>

#include "psmlab/cycle.hpp"
#include "psmlab/dataset.hpp"

namespace psmlab {

struct CurriculumConfig {
    int d_min = 1;
    int d_max = 100;
    int ramp_epochs = 100;
    std::string shape = "linear";  // or "staircase"
    int stairs = 4;                // staircase only
};

/// Maximum |i-j| allowed at the given epoch; nondecreasing, d(0)=d_min,
/// d(epoch>=ramp)=d_max.
int curriculum_distance(int epoch, const CurriculumConfig& config);

/// Index pair (i, j), i < j, from a sequence of the given length. With a
/// curriculum, |i-j| is uniform on [1, min(d(epoch), length-1)]; without,
/// the pair is uniform over all unordered pairs. Distances are in positions
/// of the (possibly subsampled) training sequence.
std::pair<int, int> sample_pair_indices(int sequence_length, int epoch,
                                        const std::optional<CurriculumConfig>& curriculum,
                                        Rng& rng);

/// Uniform-stride subsample: round(fraction*n) indices evenly spread, in
/// increasing order. fraction in (0,1].
std::vector<int> frame_subsample_indices(int n_frames, double fraction);

struct RegimeConfig {
    std::string regime = "psm";  // psm | gm | transfer_from_gm | transfer_from_psm | scratch_short
    int epochs = 500;
    double frame_fraction = 1.0;
    uint64_t seed = 0;
    std::optional<CurriculumConfig> curriculum;
    int batch_size = 16;
    nn::AdamConfig optimizer;
    DecayConfig decay;
};

/// Observes the mean loss of each finished epoch (0-based).
using EpochCallback = std::function<void(int epoch, const LossBreakdown& mean_loss)>;

CycleModel train_psm(const Dataset& dataset, const std::string& identity,
                     const RegimeConfig& regime, const ModelConfig& model_config,
                     const EpochCallback& callback = nullptr);

CycleModel train_gm(const Dataset& dataset, const RegimeConfig& regime,
                    const ModelConfig& model_config, const EpochCallback& callback = nullptr);

/// Fine-tunes every parameter of a copy of `pretrained` on the new
/// identity; 0 epochs returns an exact parameter copy.
CycleModel transfer(const CycleModel& pretrained, const Dataset& dataset,
                    const std::string& new_identity, const RegimeConfig& regime,
                    const EpochCallback& callback = nullptr);

}  // namespace psmlab
