#include "psmlab/cycle.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace psmlab {

using nn::Tensor;
using nn::Var;

double neutral_symmetric_weight(int epoch, const DecayConfig& decay) {
    if (epoch < 0) fail(ErrorCode::InvalidParams, "epoch must be >= 0");
    return std::max(decay.floor_weight, std::pow(decay.gamma, static_cast<double>(epoch)));
}

namespace {

void validate_config(const ModelConfig& c) {
    if (c.image_size < 8 || c.image_size % 4 != 0)
        fail(ErrorCode::InvalidConfig, "image_size must be >= 8 and divisible by 4");
    if (c.channels != 1 && c.channels != 3) fail(ErrorCode::InvalidConfig, "channels must be 1 or 3");
    if (c.embed_dim < 1) fail(ErrorCode::InvalidConfig, "embed_dim must be >= 1");
    if (c.base_width < 2) fail(ErrorCode::InvalidConfig, "base_width must be >= 2");
    if (c.retrieval_mode == "warp")
        fail(ErrorCode::InvalidConfig, "retrieval_mode 'warp' is a reserved stub");
    if (c.retrieval_mode != "direct")
        fail(ErrorCode::InvalidConfig, "unknown retrieval_mode: " + c.retrieval_mode);
}

Var make_conv_w(const std::string& name, int out_c, int in_c, Rng& rng) {
    return nn::make_param(name, nn::he_init(out_c, in_c, 3, 3, in_c * 9, rng));
}

Var make_vec(const std::string& name, int n) { return nn::make_param(name, Tensor::zeros(n, 1, 1, 1)); }

Var make_dense_w(const std::string& name, int out_d, int in_d, Rng& rng) {
    return nn::make_param(name, nn::he_init(out_d, in_d, 1, 1, in_d, rng));
}

}  // namespace

CycleModel::CycleModel(const ModelConfig& config, uint64_t init_seed) : config_(config) {
    validate_config(config_);
    Rng rng(hash_mix(init_seed, 0x6379636c65ULL));
    int w = config_.base_width;
    int C = config_.channels;
    int q = config_.image_size / 4;
    int flat = 2 * w * q * q;

    enc1_ = {make_conv_w("enc_conv1_w", w, C, rng), make_vec("enc_conv1_b", w)};
    enc2_ = {make_conv_w("enc_conv2_w", 2 * w, w, rng), make_vec("enc_conv2_b", 2 * w)};
    enc_fc_ = {make_dense_w("enc_fc_w", config_.embed_dim, flat, rng),
               make_vec("enc_fc_b", config_.embed_dim)};

    neu1_ = {make_conv_w("neu_conv1_w", w, C, rng), make_vec("neu_conv1_b", w)};
    neu2_ = {make_conv_w("neu_conv2_w", 2 * w, w, rng), make_vec("neu_conv2_b", 2 * w)};
    neu3_ = {make_conv_w("neu_conv3_w", w, 2 * w, rng), make_vec("neu_conv3_b", w)};
    neu4_ = {make_conv_w("neu_conv4_w", C, w, rng), make_vec("neu_conv4_b", C)};

    ret1_ = {make_conv_w("ret_conv1_w", w, C, rng), make_vec("ret_conv1_b", w)};
    ret2_ = {make_conv_w("ret_conv2_w", 2 * w, w, rng), make_vec("ret_conv2_b", 2 * w)};
    ret_code_ = {make_dense_w("ret_code_w", flat, config_.embed_dim, rng),
                 make_vec("ret_code_b", flat)};
    ret_mix_ = {make_conv_w("ret_mix_w", 2 * w, 4 * w, rng), make_vec("ret_mix_b", 2 * w)};
    ret3_ = {make_conv_w("ret_conv3_w", w, 2 * w, rng), make_vec("ret_conv3_b", w)};
    ret4_ = {make_conv_w("ret_conv4_w", C, w, rng), make_vec("ret_conv4_b", C)};
}

std::vector<Var> CycleModel::parameters() {
    return {enc1_.w, enc1_.b, enc2_.w, enc2_.b, enc_fc_.w, enc_fc_.b,
            neu1_.w, neu1_.b, neu2_.w, neu2_.b, neu3_.w,   neu3_.b,   neu4_.w, neu4_.b,
            ret1_.w, ret1_.b, ret2_.w, ret2_.b, ret_code_.w, ret_code_.b,
            ret_mix_.w, ret_mix_.b, ret3_.w, ret3_.b, ret4_.w, ret4_.b};
}

std::vector<Var> CycleModel::parameters() const {
    return const_cast<CycleModel*>(this)->parameters();
}

// ---- forward graphs ----------------------------------------------------

Var CycleModel::encode_graph(const Var& x) const {
    Var t = nn::leaky_relu(nn::conv3x3(x, enc1_.w, enc1_.b, 2));
    t = nn::leaky_relu(nn::conv3x3(t, enc2_.w, enc2_.b, 2));
    return nn::dense(t, enc_fc_.w, enc_fc_.b);
}

Var CycleModel::neutral_graph(const Var& x) const {
    Var t = nn::leaky_relu(nn::conv3x3(x, neu1_.w, neu1_.b, 2));
    t = nn::leaky_relu(nn::conv3x3(t, neu2_.w, neu2_.b, 2));
    t = nn::leaky_relu(nn::conv3x3(nn::upsample2(t), neu3_.w, neu3_.b, 1));
    return nn::sigmoid(nn::conv3x3(nn::upsample2(t), neu4_.w, neu4_.b, 1));
}

Var CycleModel::retrieve_graph(const Var& neutral, const Var& code) const {
    int q = config_.image_size / 4;
    Var t = nn::leaky_relu(nn::conv3x3(neutral, ret1_.w, ret1_.b, 2));
    t = nn::leaky_relu(nn::conv3x3(t, ret2_.w, ret2_.b, 2));
    Var c = nn::reshape(nn::dense(code, ret_code_.w, ret_code_.b), 2 * config_.base_width, q, q);
    Var m = nn::leaky_relu(nn::conv3x3(nn::concat_c(t, c), ret_mix_.w, ret_mix_.b, 1));
    m = nn::leaky_relu(nn::conv3x3(nn::upsample2(m), ret3_.w, ret3_.b, 1));
    return nn::sigmoid(nn::conv3x3(nn::upsample2(m), ret4_.w, ret4_.b, 1));
}

void CycleModel::check_frame(const Image& frame) const {
    if (frame.channels != config_.channels || frame.height != config_.image_size ||
        frame.width != config_.image_size)
        fail(ErrorCode::ShapeMismatch,
             "frame " + std::to_string(frame.channels) + "x" + std::to_string(frame.height) + "x" +
                 std::to_string(frame.width) + " does not match model config");
}

Var CycleModel::input_tensor(const std::vector<const Image*>& frames) const {
    Tensor t = Tensor::zeros(static_cast<int>(frames.size()), config_.channels,
                             config_.image_size, config_.image_size);
    size_t per = static_cast<size_t>(config_.channels) * config_.image_size * config_.image_size;
    for (size_t i = 0; i < frames.size(); ++i) {
        check_frame(*frames[i]);
        std::copy(frames[i]->data.begin(), frames[i]->data.end(), t.v.begin() + i * per);
    }
    return nn::make_input(std::move(t));
}

namespace {

Image tensor_sample_to_image(const Tensor& t, int sample) {
    Image img;
    img.channels = t.c;
    img.height = t.h;
    img.width = t.w;
    size_t per = static_cast<size_t>(t.c) * t.h * t.w;
    img.data.assign(t.v.begin() + sample * per, t.v.begin() + (sample + 1) * per);
    return img;
}

}  // namespace

MotionEmbedding CycleModel::encode(const Image& frame) const {
    nn::NoGrad guard;
    Var out = encode_graph(input_tensor({&frame}));
    return out.value().v;
}

Matrix CycleModel::encode_batch(const std::vector<const Image*>& frames) const {
    nn::NoGrad guard;
    Matrix m(static_cast<int>(frames.size()), config_.embed_dim);
    constexpr size_t kChunk = 32;  // bounds activation memory
    for (size_t start = 0; start < frames.size(); start += kChunk) {
        size_t stop = std::min(frames.size(), start + kChunk);
        std::vector<const Image*> chunk(frames.begin() + start, frames.begin() + stop);
        Var out = encode_graph(input_tensor(chunk));
        for (size_t i = start; i < stop; ++i)
            std::copy_n(out.value().v.begin() + (i - start) * config_.embed_dim,
                        config_.embed_dim, m.row(static_cast<int>(i)));
    }
    return m;
}

Image CycleModel::remove_expression(const Image& frame) const {
    nn::NoGrad guard;
    Var out = neutral_graph(input_tensor({&frame}));
    return tensor_sample_to_image(out.value(), 0);
}

Image CycleModel::retrieve_expression(const Image& neutral, const MotionEmbedding& motion) const {
    if (static_cast<int>(motion.size()) != config_.embed_dim)
        fail(ErrorCode::DimMismatch, "embedding length " + std::to_string(motion.size()) +
                                         ", model expects " + std::to_string(config_.embed_dim));
    nn::NoGrad guard;
    Tensor code = Tensor::zeros(1, config_.embed_dim, 1, 1);
    code.v = motion;
    Var out = retrieve_graph(input_tensor({&neutral}), nn::make_input(std::move(code)));
    return tensor_sample_to_image(out.value(), 0);
}

// ---- losses ------------------------------------------------------------

CycleModel::LossGraph CycleModel::build_loss_graph(const std::vector<TrainPair>& batch, int epoch,
                                                   const DecayConfig& decay) {
    if (batch.empty()) fail(ErrorCode::InvalidParams, "empty batch");
#ifndef NDEBUG
    for (const TrainPair& p : batch) assert(p.identity_a == p.identity_b && "mixed-identity pair");
#endif
    std::vector<const Image*> frames_a, frames_b;
    for (const TrainPair& p : batch) {
        frames_a.push_back(p.a);
        frames_b.push_back(p.b);
    }
    Var xa = input_tensor(frames_a);
    Var xb = input_tensor(frames_b);

    Var neutral_a = neutral_graph(xa);
    Var neutral_b = neutral_graph(xb);
    Var code_a = encode_graph(xa);
    Var code_b = encode_graph(xb);
    // Reconstruct each frame from the other frame's neutral face plus its
    // own motion code; this is the cycle the model name refers to.
    Var recon_a = retrieve_graph(neutral_b, code_a);
    Var recon_b = retrieve_graph(neutral_a, code_b);

    LossGraph g;
    g.reconstruction = nn::scale(nn::add(nn::l1(recon_a, xa), nn::l1(recon_b, xb)), 0.5);
    g.cycle_consistency = nn::l1(neutral_a, neutral_b);
    g.neutral_symmetric = nn::scale(
        nn::add(nn::l1(neutral_a, nn::mirror_w(neutral_a)), nn::l1(neutral_b, nn::mirror_w(neutral_b))),
        0.5);
    g.weight = neutral_symmetric_weight(epoch, decay);
    g.total = nn::add(nn::add(g.reconstruction, g.cycle_consistency),
                      nn::scale(g.neutral_symmetric, g.weight));
    return g;
}

LossBreakdown CycleModel::compute_losses(const Image& frame_a, const Image& frame_b, int epoch,
                                         const DecayConfig& decay) const {
    nn::NoGrad guard;
    TrainPair pair{&frame_a, &frame_b, "", ""};
    LossGraph g = const_cast<CycleModel*>(this)->build_loss_graph({pair}, epoch, decay);
    LossBreakdown out;
    out.reconstruction = g.reconstruction.value().v[0];
    out.cycle_consistency = g.cycle_consistency.value().v[0];
    out.neutral_symmetric = g.neutral_symmetric.value().v[0];
    out.neutral_symmetric_weight = g.weight;
    out.total = g.total.value().v[0];
    return out;
}

LossBreakdown CycleModel::train_step(const std::vector<TrainPair>& batch, nn::Adam& optimizer,
                                     int epoch, const DecayConfig& decay) {
    optimizer.zero_grad();
    LossGraph g = build_loss_graph(batch, epoch, decay);

    LossBreakdown out;
    out.reconstruction = g.reconstruction.value().v[0];
    out.cycle_consistency = g.cycle_consistency.value().v[0];
    out.neutral_symmetric = g.neutral_symmetric.value().v[0];
    out.neutral_symmetric_weight = g.weight;
    out.total = g.total.value().v[0];
    if (!std::isfinite(out.total))
        fail(ErrorCode::NonFiniteLoss,
             "non-finite loss at epoch " + std::to_string(epoch) + ": recon=" +
                 std::to_string(out.reconstruction) + " cycle=" + std::to_string(out.cycle_consistency) +
                 " nsym=" + std::to_string(out.neutral_symmetric) +
                 " batch=" + std::to_string(batch.size()));

    nn::backward(g.total);
    optimizer.step();

    for (const Var& p : parameters())
        for (double v : p.value().v)
            if (!std::isfinite(v))
                fail(ErrorCode::NonFiniteLoss,
                     "non-finite parameter in " + p.name() + " after step at epoch " +
                         std::to_string(epoch));
    return out;
}

// ---- serialization -----------------------------------------------------

void CycleModel::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "psmlab-bundle-v1";
    manifest["config"] = {{"image_size", config_.image_size},
                          {"channels", config_.channels},
                          {"embed_dim", config_.embed_dim},
                          {"base_width", config_.base_width},
                          {"retrieval_mode", config_.retrieval_mode}};
    manifest["provenance"] = {{"regime", provenance_.regime},
                              {"subjects", provenance_.subjects},
                              {"epochs_trained", provenance_.epochs_trained},
                              {"seed", provenance_.seed},
                              {"parent", provenance_.parent}};
    nlohmann::json tensors = nlohmann::json::array();
    for (const Var& p : parameters()) {
        const Tensor& t = p.value();
        std::string file = p.name() + ".f32";
        write_f32_file((fs::path(dir) / file).string(), t.v.data(), t.v.size());
        tensors.push_back({{"name", p.name()},
                           {"file", file},
                           {"shape", {t.n, t.c, t.h, t.w}}});
    }
    manifest["tensors"] = std::move(tensors);
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) fail(ErrorCode::IoError, "cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

CycleModel CycleModel::load(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) fail(ErrorCode::IoError, "cannot open bundle manifest in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        fail(ErrorCode::SchemaMismatch, "bundle manifest parse error: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "psmlab-bundle-v1")
        fail(ErrorCode::SchemaMismatch, "unknown bundle format tag");

    ModelConfig config;
    const auto& jc = manifest.at("config");
    config.image_size = jc.at("image_size").get<int>();
    config.channels = jc.at("channels").get<int>();
    config.embed_dim = jc.at("embed_dim").get<int>();
    config.base_width = jc.at("base_width").get<int>();
    config.retrieval_mode = jc.value("retrieval_mode", "direct");

    CycleModel model(config, 0);
    const auto& jp = manifest.at("provenance");
    model.provenance_.regime = jp.value("regime", "");
    model.provenance_.subjects = jp.value("subjects", std::vector<std::string>{});
    model.provenance_.epochs_trained = jp.value("epochs_trained", 0);
    model.provenance_.seed = jp.value("seed", static_cast<uint64_t>(0));
    model.provenance_.parent = jp.value("parent", "");

    std::map<std::string, Var> by_name;
    for (Var& p : model.parameters()) by_name.emplace(p.name(), p);
    size_t loaded = 0;
    for (const auto& entry : manifest.at("tensors")) {
        std::string name = entry.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) fail(ErrorCode::SchemaMismatch, "unknown tensor in bundle: " + name);
        Tensor& t = it->second.value();
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (shape.size() != 4 || shape[0] != t.n || shape[1] != t.c || shape[2] != t.h ||
            shape[3] != t.w)
            fail(ErrorCode::SchemaMismatch, "tensor shape mismatch for " + name);
        t.v = read_f32_file((fs::path(dir) / entry.at("file").get<std::string>()).string(),
                            static_cast<long>(t.size()));
        ++loaded;
    }
    if (loaded != model.parameters().size())
        fail(ErrorCode::SchemaMismatch, "bundle is missing tensors");
    return model;
}

CycleModel CycleModel::clone() const {
    CycleModel copy(config_, 0);
    copy.provenance_ = provenance_;
    std::vector<Var> src = parameters();
    std::vector<Var> dst = copy.parameters();
    for (size_t i = 0; i < src.size(); ++i) dst[i].value().v = src[i].value().v;
    return copy;
}

// ---- evaluation distances ----------------------------------------------

double neutral_distance(const Image& a, const Image& b) {
    if (!a.same_shape(b)) fail(ErrorCode::ShapeMismatch, "neutral_distance shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = 255.0 * (a.data[i] - b.data[i]);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.data.size()));
}

double neutral_consistency(const CycleModel& model, const std::vector<const Image*>& frames) {
    if (frames.size() < 2) fail(ErrorCode::TooFewFrames, "neutral_consistency needs >= 2 frames");
    std::vector<Image> neutrals;
    neutrals.reserve(frames.size());
    for (const Image* f : frames) neutrals.push_back(model.remove_expression(*f));
    double acc = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < neutrals.size(); ++i)
        for (size_t j = i + 1; j < neutrals.size(); ++j) {
            acc += neutral_distance(neutrals[i], neutrals[j]);
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

}  // namespace psmlab
