#include "psmlab/regimes.hpp"

#include <algorithm>
#include <cmath>

namespace psmlab {

namespace {

void validate_curriculum(const CurriculumConfig& c) {
    if (c.d_min < 1) fail(ErrorCode::InvalidConfig, "curriculum d_min must be >= 1");
    if (c.d_max < c.d_min) fail(ErrorCode::InvalidConfig, "curriculum d_max must be >= d_min");
    if (c.ramp_epochs < 1) fail(ErrorCode::InvalidConfig, "curriculum ramp_epochs must be >= 1");
    if (c.shape != "linear" && c.shape != "staircase")
        fail(ErrorCode::InvalidConfig, "curriculum shape must be linear or staircase");
    if (c.shape == "staircase" && c.stairs < 1)
        fail(ErrorCode::InvalidConfig, "curriculum stairs must be >= 1");
}

}  // namespace

int curriculum_distance(int epoch, const CurriculumConfig& config) {
    validate_curriculum(config);
    if (epoch < 0) fail(ErrorCode::InvalidParams, "epoch must be >= 0");
    if (epoch >= config.ramp_epochs) return config.d_max;
    double progress = static_cast<double>(epoch) / config.ramp_epochs;
    if (config.shape == "staircase")
        progress = std::floor(progress * config.stairs) / config.stairs;
    return config.d_min +
           static_cast<int>(std::lround((config.d_max - config.d_min) * progress));
}

std::pair<int, int> sample_pair_indices(int sequence_length, int epoch,
                                        const std::optional<CurriculumConfig>& curriculum,
                                        Rng& rng) {
    if (sequence_length < 2)
        fail(ErrorCode::SequenceTooShort, "need >= 2 frames to form a pair, have " +
                                              std::to_string(sequence_length));
    if (curriculum) {
        int d = std::min(curriculum_distance(epoch, *curriculum), sequence_length - 1);
        int delta = rng.uniform_int(1, d);
        int i = rng.uniform_int(0, sequence_length - 1 - delta);
        return {i, i + delta};
    }
    int i = rng.uniform_int(0, sequence_length - 1);
    int j = rng.uniform_int(0, sequence_length - 2);
    if (j >= i) ++j;
    return {std::min(i, j), std::max(i, j)};
}

std::vector<int> frame_subsample_indices(int n_frames, double fraction) {
    if (n_frames < 1) fail(ErrorCode::InvalidParams, "n_frames must be >= 1");
    if (!(fraction > 0.0 && fraction <= 1.0))
        fail(ErrorCode::InvalidParams, "frame_fraction must be in (0,1]");
    int k = std::max(1, static_cast<int>(std::lround(fraction * n_frames)));
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i)
        out.push_back(static_cast<int>(static_cast<long>(i) * n_frames / k));
    return out;
}

namespace {

struct SubjectSequence {
    std::string identity;
    std::vector<const Image*> frames;
};

void validate_regime(const RegimeConfig& regime) {
    if (regime.epochs < 0) fail(ErrorCode::InvalidConfig, "epochs must be >= 0");
    if (regime.batch_size < 1) fail(ErrorCode::InvalidConfig, "batch_size must be >= 1");
    if (!(regime.frame_fraction > 0.0 && regime.frame_fraction <= 1.0))
        fail(ErrorCode::InvalidConfig, "frame_fraction must be in (0,1]");
    if (regime.curriculum) validate_curriculum(*regime.curriculum);
}

std::vector<const Image*> subsampled_frames(const std::vector<FrameRef>& frames,
                                            double fraction) {
    std::vector<int> indices = frame_subsample_indices(static_cast<int>(frames.size()), fraction);
    std::vector<const Image*> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(&frames[static_cast<size_t>(i)].pixels);
    return out;
}

/// Shared epoch loop. One epoch visits every subject in order; each subject
/// contributes max(1, frames/batch_size) steps of same-identity pairs.
void run_training(CycleModel& model, const std::vector<SubjectSequence>& subjects,
                  const RegimeConfig& regime, const EpochCallback& callback) {
    nn::Adam optimizer(model.parameters(), regime.optimizer);
    Rng rng = Rng(regime.seed).fork(0x747261696eULL);

    for (int epoch = 0; epoch < regime.epochs; ++epoch) {
        LossBreakdown mean;
        int steps = 0;
        for (const SubjectSequence& subject : subjects) {
            int n = static_cast<int>(subject.frames.size());
            int subject_steps = std::max(1, n / regime.batch_size);
            for (int s = 0; s < subject_steps; ++s) {
                std::vector<TrainPair> batch;
                batch.reserve(static_cast<size_t>(regime.batch_size));
                for (int b = 0; b < regime.batch_size; ++b) {
                    auto [i, j] = sample_pair_indices(n, epoch, regime.curriculum, rng);
                    batch.push_back({subject.frames[static_cast<size_t>(i)],
                                     subject.frames[static_cast<size_t>(j)], subject.identity,
                                     subject.identity});
                }
                LossBreakdown loss = model.train_step(batch, optimizer, epoch, regime.decay);
                mean.reconstruction += loss.reconstruction;
                mean.cycle_consistency += loss.cycle_consistency;
                mean.neutral_symmetric += loss.neutral_symmetric;
                mean.neutral_symmetric_weight = loss.neutral_symmetric_weight;
                mean.total += loss.total;
                ++steps;
            }
        }
        if (callback && steps > 0) {
            mean.reconstruction /= steps;
            mean.cycle_consistency /= steps;
            mean.neutral_symmetric /= steps;
            mean.total /= steps;
            callback(epoch, mean);
        }
    }
    model.provenance().epochs_trained += regime.epochs;
}

}  // namespace

CycleModel train_psm(const Dataset& dataset, const std::string& identity,
                     const RegimeConfig& regime, const ModelConfig& model_config,
                     const EpochCallback& callback) {
    validate_regime(regime);
    const std::vector<FrameRef>& frames = dataset.frames_of(identity);

    CycleModel model(model_config, hash_mix(regime.seed, fnv1a64(identity.data(), identity.size())));
    model.provenance().regime = regime.curriculum && regime.regime == "psm" ? "curriculum"
                                                                            : regime.regime;
    model.provenance().subjects = {identity};
    model.provenance().seed = regime.seed;

    std::vector<SubjectSequence> subjects{{identity, subsampled_frames(frames, regime.frame_fraction)}};
    run_training(model, subjects, regime, callback);
    return model;
}

CycleModel train_gm(const Dataset& dataset, const RegimeConfig& regime,
                    const ModelConfig& model_config, const EpochCallback& callback) {
    validate_regime(regime);
    std::vector<std::string> ids = dataset.identities();
    if (ids.empty() || dataset.total_frames() == 0)
        fail(ErrorCode::EmptyDataset, "train_gm on empty dataset");

    CycleModel model(model_config, hash_mix(regime.seed, 0x676dULL));
    model.provenance().regime = regime.regime;
    model.provenance().subjects = ids;
    model.provenance().seed = regime.seed;

    std::vector<SubjectSequence> subjects;
    for (const std::string& id : ids)
        subjects.push_back({id, subsampled_frames(dataset.frames_of(id), regime.frame_fraction)});
    run_training(model, subjects, regime, callback);
    return model;
}

CycleModel transfer(const CycleModel& pretrained, const Dataset& dataset,
                    const std::string& new_identity, const RegimeConfig& regime,
                    const EpochCallback& callback) {
    validate_regime(regime);
    const std::vector<FrameRef>& frames = dataset.frames_of(new_identity);
    const ModelConfig& config = pretrained.config();
    if (dataset.metadata.image_height != config.image_size ||
        dataset.metadata.image_width != config.image_size ||
        dataset.metadata.channels != config.channels)
        fail(ErrorCode::ConfigMismatch,
             "pretrained bundle expects " + std::to_string(config.channels) + "x" +
                 std::to_string(config.image_size) + "x" + std::to_string(config.image_size) +
                 " frames");

    CycleModel model = pretrained.clone();
    const Provenance& src = pretrained.provenance();
    std::string parent = src.regime + "(";
    for (size_t i = 0; i < src.subjects.size(); ++i)
        parent += (i ? "," : "") + src.subjects[i];
    parent += ")@" + std::to_string(src.epochs_trained);
    if (!src.parent.empty()) parent += " <- " + src.parent;

    model.provenance().regime = regime.regime;
    model.provenance().subjects = {new_identity};
    model.provenance().seed = regime.seed;
    model.provenance().parent = parent;
    model.provenance().epochs_trained = 0;

    std::vector<SubjectSequence> subjects{
        {new_identity, subsampled_frames(frames, regime.frame_fraction)}};
    run_training(model, subjects, regime, callback);
    return model;
}

}  // namespace psmlab
