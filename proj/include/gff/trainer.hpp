#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "gff/metrics.hpp"
#include "gff/model.hpp"
#include "gff/perturb.hpp"
#include "gff/synthdata.hpp"

namespace gff {

// ---- loss -------------------------------------------------------------------

/// Mean binary cross-entropy over a batch of sigmoid scores. Scores are
/// clamped to [1e-7, 1 - 1e-7] before the logs, so the loss is always finite.
template <typename S>
Tensor<S> bce_loss(const Tensor<S>& scores, const Tensor<S>& labels) {
    if (scores.shape() != labels.shape())
        throw DimError("bce_loss: scores " + shape_str(scores.shape()) + " vs labels " +
                       shape_str(labels.shape()));
    const S lo = S(1e-7);
    Tensor<S> s = clamp(scores, lo, S(1) - lo);
    Tensor<S> pos = mul(labels, log(s));
    Tensor<S> neg = mul(affine(labels, S(-1), S(1)), log(affine(s, S(-1), S(1))));
    return affine(sum_all(add(pos, neg)), S(-1) / static_cast<S>(scores.numel()), S(0));
}

// ---- optimizer ----------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are kept in double regardless of the
/// parameter scalar type; state is keyed by parameter name.
template <typename S>
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }

    /// Updates every non-frozen parameter accepted by `trainable` that has a
    /// gradient. Frozen entries are never touched.
    void step(ParameterRegistry<S>& registry,
              const std::function<bool(const std::string&)>& trainable, double lr) {
        for (auto& e : registry.entries()) {
            if (e.frozen || (trainable && !trainable(e.name))) continue;
            if (!e.tensor.has_grad()) continue;
            State& st = states_[e.name];
            if (st.m.size() != e.tensor.numel()) {
                st.m.assign(e.tensor.numel(), 0.0);
                st.v.assign(e.tensor.numel(), 0.0);
                st.t = 0;
            }
            st.t += 1;
            const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(st.t));
            const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(st.t));
            auto p = e.tensor.data_mut();
            auto g = e.tensor.grad();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                st.m[i] = config_.beta1 * st.m[i] + (1.0 - config_.beta1) * gi;
                st.v[i] = config_.beta2 * st.v[i] + (1.0 - config_.beta2) * gi * gi;
                const double mhat = st.m[i] / bc1;
                const double vhat = st.v[i] / bc2;
                p[i] = static_cast<S>(static_cast<double>(p[i]) -
                                      lr * mhat / (std::sqrt(vhat) + config_.eps));
            }
        }
    }

private:
    struct State {
        std::vector<double> m, v;
        std::uint64_t t = 0;
    };
    AdamConfig config_;
    std::unordered_map<std::string, State> states_;
};

// ---- stage plans --------------------------------------------------------------

/// One stage of the two-stage protocol. Defaults carry the published recipe:
/// stage one trains only the adapters (lr 5e-5, 3 epochs, batch 32), stage
/// two only FuseFormer + Fuse CLS + classifier head (lr 5e-6, 1 epoch,
/// batch 128); the backbone stays frozen throughout.
struct StagePlan {
    int stage = 1;
    double lr = 5e-5;
    int epochs = 3;
    int batch_size = 32;

    static StagePlan stage1_defaults() { return StagePlan{1, 5e-5, 3, 32}; }
    static StagePlan stage2_defaults() { return StagePlan{2, 5e-6, 1, 128}; }
};

/// Name predicate for the parameters a stage may update.
inline std::function<bool(const std::string&)> stage_trainable_predicate(int stage,
                                                                         AblationMode mode) {
    if (stage == 1)
        return [](const std::string& name) { return name.find(".dfgm.") != std::string::npos; };
    const bool fuse_present = mode == AblationMode::kFull || mode == AblationMode::kNoDfgm;
    return [fuse_present](const std::string& name) {
        if (name.rfind("head.", 0) == 0) return true;
        return fuse_present && name.rfind("fuse.", 0) == 0;
    };
}

// ---- data -----------------------------------------------------------------------

struct TrainSample {
    Image image;
    int label = 0;
    Family family = Family::kReal;
    std::string path;
    std::uint64_t seed = 0;
};

/// Loads a split's manifest and decodes every image up front.
inline std::vector<TrainSample> load_split(const std::string& dataset_dir,
                                           const std::string& split) {
    namespace fs = std::filesystem;
    const std::string manifest = (fs::path(dataset_dir) / (split + ".csv")).string();
    if (!fs::exists(manifest)) throw DataError("missing manifest " + manifest);
    std::vector<TrainSample> samples;
    for (const auto& row : read_manifest(manifest)) {
        TrainSample s;
        s.image = read_ppm((fs::path(dataset_dir) / row.path).string());
        s.label = row.label;
        s.family = row.family;
        s.path = row.path;
        s.seed = row.seed;
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---- training ----------------------------------------------------------------

struct StepRecord {
    int stage = 0;
    int epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
};

using TrainLog = std::vector<StepRecord>;

/// Runs one stage of the protocol. Deterministic under (seed, plan): the
/// shuffle order and augmentation draws derive from the seed alone. Verifies
/// on exit that no parameter outside the stage's trainable set moved.
template <typename S>
TrainLog run_stage(GffModel<S>& model, Adam<S>& optimizer, const StagePlan& plan,
                   const std::vector<TrainSample>& data, std::uint64_t seed) {
    TrainLog log;
    if (plan.epochs <= 0) return log;
    if (data.empty()) throw DataError("run_stage: empty training split");
    if (plan.batch_size <= 0) throw ContractError("run_stage: batch size must be positive");

    auto& registry = model.registry();
    const auto trainable = stage_trainable_predicate(plan.stage, model.config().mode);
    const auto before = registry.snapshot();  // for the stage-discipline check

    const std::size_t crop = model.config().backbone.image_size;
    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(mix_seed(seed, 0x53485546, static_cast<std::uint64_t>(plan.stage),
                                 static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        const std::size_t batches =
            (data.size() + plan.batch_size - 1) / static_cast<std::size_t>(plan.batch_size);
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * plan.batch_size;
            const std::size_t hi = std::min(data.size(), lo + plan.batch_size);
            registry.zero_grads();
            double loss_value = 0.0;
            {
                Tape<S> tape;
                std::vector<Tensor<S>> scores;
                std::vector<S> labels;
                scores.reserve(hi - lo);
                for (std::size_t i = lo; i < hi; ++i) {
                    const TrainSample& sample = data[order[i]];
                    const std::uint64_t aug_seed =
                        mix_seed(seed, 0x41554731, static_cast<std::uint64_t>(plan.stage),
                                 (static_cast<std::uint64_t>(epoch) << 32) | order[i]);
                    LabeledImage li;
                    li.image = sample.image;
                    li.label = sample.label;
                    LabeledImage cropped = resize_and_crop(li, crop, /*train=*/true, aug_seed);
                    Tensor<S> img = image_to_tensor<S>(cropped.image);
                    Tensor<S> score;
                    if (plan.stage == 1) {
                        score = model.probe_score_from(model.encode(img));
                    } else {
                        // the frozen prefix is constant in stage two; keep it
                        // off the tape
                        StageTokens<S> stages;
                        {
                            typename Tape<S>::Suspend pause;
                            stages = model.encode(img);
                        }
                        score = model.score_from(stages);
                    }
                    scores.push_back(std::move(score));
                    labels.push_back(static_cast<S>(sample.label));
                }
                Tensor<S> score_vec = concat_1d(scores);
                const std::size_t batch_n = labels.size();
                Tensor<S> label_vec = Tensor<S>::from({batch_n}, std::move(labels));
                Tensor<S> loss = bce_loss(score_vec, label_vec);
                loss_value = static_cast<double>(loss.item());
                // a non-finite score would be masked by the BCE clamp, so
                // check both
                if (!std::isfinite(loss_value) || !score_vec.all_finite())
                    throw NumericError("non-finite loss at stage " + std::to_string(plan.stage) +
                                       " epoch " + std::to_string(epoch) + " step " +
                                       std::to_string(b));
                tape.backward(loss);
            }
            optimizer.step(registry, trainable, plan.lr);
            log.push_back({plan.stage, epoch, b, loss_value});
        }
    }

    // stage discipline: everything outside the trainable set must be
    // bit-identical to its value at stage entry
    std::size_t idx = 0;
    for (const auto& e : registry.entries()) {
        const auto& snap = before[idx++];
        if (!e.frozen && trainable(e.name)) continue;
        const auto now = e.tensor.data();
        if (!std::equal(snap.begin(), snap.end(), now.begin()))
            throw ContractError("stage " + std::to_string(plan.stage) +
                                " modified out-of-plan parameter " + e.name);
    }
    return log;
}

/// Full protocol: stage one (adapters) when the mode has them, then stage
/// two (fusion head). Modes without adapters skip stage one entirely.
template <typename S>
TrainLog train_two_stage(GffModel<S>& model, const std::vector<TrainSample>& data,
                         const StagePlan& plan1, const StagePlan& plan2, std::uint64_t seed,
                         AdamConfig adam_config = {}) {
    Adam<S> optimizer(adam_config);
    TrainLog log;
    if (model.has_adapters()) {
        TrainLog s1 = run_stage(model, optimizer, plan1, data, seed);
        log.insert(log.end(), s1.begin(), s1.end());
    }
    TrainLog s2 = run_stage(model, optimizer, plan2, data, seed);
    log.insert(log.end(), s2.begin(), s2.end());
    return log;
}

// ---- evaluation ----------------------------------------------------------------

struct EvalOptions {
    std::optional<PerturbationConfig> perturbation;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0 = hardware concurrency, capped
};

/// Center-crop evaluation over a split. Optionally perturbs each image first
/// (seeded per index, so runs are reproducible). Images are scored
/// independently; worker threads write disjoint slots.
template <typename S>
std::vector<double> score_split(const GffModel<S>& model, const std::vector<TrainSample>& data,
                                const EvalOptions& options = {}) {
    const std::size_t crop = model.config().backbone.image_size;
    std::vector<double> scores(data.size());
    auto score_one = [&](std::size_t i) {
        LabeledImage li;
        li.image = data[i].image;
        li.label = data[i].label;
        li.family = data[i].family;
        if (options.perturbation)
            li = perturb(li, *options.perturbation, mix_seed(options.seed, 0x4556414c, i));
        LabeledImage cropped = resize_and_crop(li, crop, /*train=*/false, 0);
        scores[i] = static_cast<double>(
            model.score(image_to_tensor<S>(cropped.image)).item());
    };
    unsigned workers = options.threads ? options.threads
                                       : std::min(8u, std::thread::hardware_concurrency());
    if (workers <= 1 || data.size() < 2 * workers) {
        for (std::size_t i = 0; i < data.size(); ++i) score_one(i);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < data.size(); i += workers) score_one(i);
            });
        for (auto& t : pool) t.join();
    }
    return scores;
}

template <typename S>
EvalReport evaluate(const GffModel<S>& model, const std::vector<TrainSample>& data,
                    const EvalOptions& options = {}) {
    if (data.empty()) throw MetricError("evaluate: empty split");
    const std::vector<double> scores = score_split(model, data, options);
    std::vector<int> labels;
    std::vector<std::string> families;
    for (const auto& s : data) {
        labels.push_back(s.label);
        families.push_back(family_name(s.family));
    }
    return make_report(scores, labels, families);
}

// ---- exports --------------------------------------------------------------------

inline void write_metrics_csv(const std::vector<std::pair<std::string, EvalReport>>& reports,
                              const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << "split,family,n,acc,ap\n";
    char buf[128];
    for (const auto& [split, report] : reports) {
        auto emit = [&](const FamilyMetrics& m) {
            std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.6f,%.6f\n", split.c_str(),
                          m.family.c_str(), m.count, m.acc, m.ap);
            os << buf;
        };
        for (const auto& m : report.families) emit(m);
        emit(report.mean);
    }
}

inline void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << "stage,epoch,step,loss\n";
    char buf[128];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%d,%zu,%.8f\n", r.stage, r.epoch, r.step, r.loss);
        os << buf;
    }
}

/// One row per image: path, label, family, then the D values of the feature
/// the classifier sees.
template <typename S>
void export_features(const GffModel<S>& model, const std::vector<TrainSample>& data,
                     const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    const std::size_t dim = model.config().backbone.embed_dim;
    os << "path,label,family";
    for (std::size_t d = 0; d < dim; ++d) os << ",f" << d;
    os << "\n";
    const std::size_t crop = model.config().backbone.image_size;
    char buf[64];
    for (const auto& sample : data) {
        LabeledImage li;
        li.image = sample.image;
        LabeledImage cropped = resize_and_crop(li, crop, /*train=*/false, 0);
        Tensor<S> feat = model.feature(model.encode(image_to_tensor<S>(cropped.image)));
        os << sample.path << "," << sample.label << "," << family_name(sample.family);
        for (std::size_t d = 0; d < dim; ++d) {
            std::snprintf(buf, sizeof buf, ",%.8g", static_cast<double>(feat.at(d)));
            os << buf;
        }
        os << "\n";
    }
}

/// Gradient-weighted patch heatmap: d(logit)/d(patch tokens entering the
/// final block), ReLU'd and summed over channels, min-max normalized, then
/// upsampled to the source image size. A zero gradient map stays all-zero.
template <typename S>
std::vector<float> cam_map(const GffModel<S>& model, const Image& source) {
    const std::size_t crop = model.config().backbone.image_size;
    LabeledImage li;
    li.image = source;
    LabeledImage cropped = resize_and_crop(li, crop, /*train=*/false, 0);
    Tensor<S> img = image_to_tensor<S>(cropped.image);

    StageTokens<S> stages;
    {
        Tape<S> tape;
        stages = model.encode(img, /*trace_last_input=*/true);
        Tensor<S> lg = model.logit_from(stages);
        tape.backward(lg);
    }
    const auto grad = stages.last_block_input.grad();
    const std::size_t dim = model.config().backbone.embed_dim;
    const std::size_t patches = model.config().backbone.patch_count();
    std::vector<float> heat(patches, 0.0f);
    for (std::size_t p = 0; p < patches; ++p) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double g = static_cast<double>(grad[(p + 1) * dim + d]);  // skip CLS row
            if (g > 0) acc += g;
        }
        heat[p] = static_cast<float>(acc);
    }
    const float mn = *std::min_element(heat.begin(), heat.end());
    const float mx = *std::max_element(heat.begin(), heat.end());
    if (mx > mn)
        for (auto& v : heat) v = (v - mn) / (mx - mn);
    else
        std::fill(heat.begin(), heat.end(), 0.0f);

    // bilinear upsample of the patch grid to the source size
    const std::size_t grid = model.config().backbone.image_size / model.config().backbone.patch_size;
    std::vector<float> out(source.height * source.width);
    for (std::size_t y = 0; y < source.height; ++y)
        for (std::size_t x = 0; x < source.width; ++x) {
            const double fy = (y + 0.5) * grid / source.height - 0.5;
            const double fx = (x + 0.5) * grid / source.width - 0.5;
            const double cy = std::min(std::max(fy, 0.0), static_cast<double>(grid - 1));
            const double cx = std::min(std::max(fx, 0.0), static_cast<double>(grid - 1));
            const std::size_t y0 = static_cast<std::size_t>(cy);
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t y1 = std::min(y0 + 1, grid - 1);
            const std::size_t x1 = std::min(x0 + 1, grid - 1);
            const float wy = static_cast<float>(cy - y0), wx = static_cast<float>(cx - x0);
            const float top = heat[y0 * grid + x0] * (1 - wx) + heat[y0 * grid + x1] * wx;
            const float bot = heat[y1 * grid + x0] * (1 - wx) + heat[y1 * grid + x1] * wx;
            out[y * source.width + x] = top * (1 - wy) + bot * wy;
        }
    return out;
}

template <typename S>
void export_cam(const GffModel<S>& model, const Image& source, const std::string& path) {
    write_pgm(cam_map(model, source), source.height, source.width, path);
}

}  // namespace gff
