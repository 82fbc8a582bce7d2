#pragma once

// The facial-motion cycle-consistency model. Three networks share one
// training objective: an encoder that maps a face to a motion code, a
// generator that strips expression to a neutral face, and a generator that
// re-applies a motion code to a neutral face. Training pairs always come
// from the same person, so the only thing the code can carry across the
// cycle is motion.

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "psmlab/image.hpp"
#include "psmlab/nn.hpp"

namespace psmlab {

using MotionEmbedding = std::vector<double>;

struct ModelConfig {
    int image_size = 64;   // must be divisible by 4
    int channels = 3;
    int embed_dim = 256;
    int base_width = 16;   // encoder first-layer channels; widths scale from here
    std::string retrieval_mode = "direct";  // "warp" reserved, not implemented

    bool operator==(const ModelConfig&) const = default;
};

/// Decay of the neutral-face symmetric loss weight over epochs.
struct DecayConfig {
    double gamma = 0.98;
    double floor_weight = 0.05;
};

double neutral_symmetric_weight(int epoch, const DecayConfig& decay);

struct LossBreakdown {
    double reconstruction = 0.0;
    double cycle_consistency = 0.0;
    double neutral_symmetric = 0.0;
    double neutral_symmetric_weight = 1.0;
    double total = 0.0;
};

struct Provenance {
    std::string regime;  // psm | gm | transfer_from_gm | transfer_from_psm | scratch_short
    std::vector<std::string> subjects;
    int epochs_trained = 0;
    uint64_t seed = 0;
    std::string parent;  // provenance chain of the bundle this was fine-tuned from
};

/// A frame pair for training. Both frames must come from the same person;
/// the two identity tags exist so debug builds can assert that contract.
struct TrainPair {
    const Image* a = nullptr;
    const Image* b = nullptr;
    std::string_view identity_a;
    std::string_view identity_b;
};

class CycleModel {
  public:
    CycleModel(const ModelConfig& config, uint64_t init_seed);

    const ModelConfig& config() const { return config_; }
    const Provenance& provenance() const { return provenance_; }
    Provenance& provenance() { return provenance_; }

    // Inference, pure with respect to the model.
    MotionEmbedding encode(const Image& frame) const;
    Image remove_expression(const Image& frame) const;
    Image retrieve_expression(const Image& neutral, const MotionEmbedding& motion) const;
    /// Row r of the result is the embedding of frames[r].
    Matrix encode_batch(const std::vector<const Image*>& frames) const;

    LossBreakdown compute_losses(const Image& frame_a, const Image& frame_b, int epoch,
                                 const DecayConfig& decay) const;

    /// One optimizer update on a batch of same-identity pairs.
    LossBreakdown train_step(const std::vector<TrainPair>& batch, nn::Adam& optimizer, int epoch,
                             const DecayConfig& decay);

    /// Loss graph with live gradients, exposed for the finite-difference
    /// checks; ordinary callers want compute_losses or train_step.
    struct LossGraph {
        nn::Var reconstruction, cycle_consistency, neutral_symmetric, total;
        double weight = 1.0;
    };
    LossGraph build_loss_graph(const std::vector<TrainPair>& batch, int epoch,
                               const DecayConfig& decay);

    /// Shared handles to every parameter tensor, encoder first.
    std::vector<nn::Var> parameters();
    std::vector<nn::Var> parameters() const;

    void save(const std::string& dir) const;
    static CycleModel load(const std::string& dir);

    /// Deep copy (fresh parameter storage).
    CycleModel clone() const;

  private:
    struct ConvLayer {
        nn::Var w, b;
    };
    struct DenseLayer {
        nn::Var w, b;
    };

    nn::Var encode_graph(const nn::Var& x) const;
    nn::Var neutral_graph(const nn::Var& x) const;
    nn::Var retrieve_graph(const nn::Var& neutral, const nn::Var& code) const;
    nn::Var input_tensor(const std::vector<const Image*>& frames) const;
    void check_frame(const Image& frame) const;

    ModelConfig config_;
    Provenance provenance_;

    ConvLayer enc1_, enc2_;
    DenseLayer enc_fc_;
    ConvLayer neu1_, neu2_, neu3_, neu4_;
    ConvLayer ret1_, ret2_, ret_mix_, ret3_, ret4_;
    DenseLayer ret_code_;
};

/// RMS per-pixel distance on the 0-255 scale between two images, the unit
/// used for neutral-face consistency comparisons.
double neutral_distance(const Image& a, const Image& b);

/// Mean pairwise neutral_distance among remove_expression outputs for the
/// given frames.
double neutral_consistency(const CycleModel& model, const std::vector<const Image*>& frames);

}  // namespace psmlab
