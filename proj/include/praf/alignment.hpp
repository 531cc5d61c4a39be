#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "praf/encoder.hpp"
#include "praf/image.hpp"

namespace praf {

// Layers are addressed 1-based throughout (l in [1, depth]); the candidate
// pool for selection is layers 1..depth-1, the final layer being reserved
// for the global loss.

struct LayerRef {
    std::size_t encoder = 0;  // index into the ensemble
    std::size_t layer = 0;    // 1-based

    auto operator<=>(const LayerRef&) const = default;
};

struct CandidateScore {
    LayerRef ref;
    double score = 0.0;
};

struct SelectionSet {
    std::vector<LayerRef> entries;
    std::vector<double> scores;  // matching gradient-consistency values

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

enum class RankPolicy { Strict, ClampToPool };

/// Entries at the given 1-based rank positions of the pool sorted by score
/// descending (ties by (encoder, layer) ascending). Strict policy throws
/// when a rank exceeds the pool; ClampToPool clamps with a warning and
/// deduplicates.
SelectionSet select_layers(std::vector<CandidateScore> pool, const std::vector<std::size_t>& ranks,
                           RankPolicy policy = RankPolicy::Strict);

enum class MaskMode { TopK, BottomK };

struct PatchMask {
    std::vector<std::uint8_t> bits;  // length P, exactly `kept` ones
    std::size_t kept = 0;
};

/// Ones at the K = floor(gamma * P) largest entries of s (TopK) or smallest
/// (BottomK); ties keep the lower patch index. The mask is a constant:
/// no gradient flows through the selection.
PatchMask build_mask(const std::vector<double>& similarities, double gamma,
                     MaskMode mode = MaskMode::TopK);

struct LossWeights {
    double lambda_cls = 0.5;
    double lambda_patch = 1.5;
};

// --- differentiable loss nodes (adv/ref taps must live on one tape) -------

/// 1 - (1/N) * sum_n cos(final-layer CLS of adv, final-layer CLS of ref).
Tensor global_loss(const std::vector<LayerTaps>& adv, const std::vector<LayerTaps>& ref);

/// Per-patch cosine between adv and ref patch tokens at `layer` -> {P}.
Tensor patch_similarities(const LayerTaps& adv, const LayerTaps& ref, std::size_t layer);

/// 1 - (1/K) * sum of masked similarities; gradient reaches kept patches only.
Tensor patch_loss(Tensor similarities, const PatchMask& mask);

/// 1 - cos(CLS of adv at `layer`, CLS of ref at `layer`).
Tensor cls_loss(const LayerTaps& adv, const LayerTaps& ref, std::size_t layer);

struct IntermediateLoss {
    Tensor value;
    std::vector<PatchMask> masks;  // one per selection entry
};

/// sum over the selection of (lambda_cls * L_cls + lambda_patch * L_patch).
/// Masks are built from the current similarities unless fixed_masks is given
/// (used by gradient-check oracles to freeze the selection).
IntermediateLoss intermediate_loss(const SelectionSet& selection, const LossWeights& weights,
                                   const std::vector<LayerTaps>& adv,
                                   const std::vector<LayerTaps>& ref, double gamma,
                                   MaskMode mode = MaskMode::TopK,
                                   const std::vector<PatchMask>* fixed_masks = nullptr);

struct TotalLoss {
    Tensor total;
    Tensor global_part;
    Tensor inter_part;
    std::vector<PatchMask> masks;
};

TotalLoss total_loss(const std::vector<LayerTaps>& adv, const std::vector<LayerTaps>& ref,
                     const SelectionSet& selection, const LossWeights& weights, double gamma,
                     MaskMode mode = MaskMode::TopK,
                     const std::vector<PatchMask>* fixed_masks = nullptr);

// --- selection-time gradients, evaluated at delta = 0 ---------------------

/// Plain cosine between two flat gradient images.
double gradient_consistency(std::span<const double> g_global, std::span<const double> g_local);

/// Gradient of the global loss w.r.t. the perturbation at delta = 0,
/// against the pristine (full-resolution) target.
std::vector<double> global_selection_gradient(const Ensemble& ensemble, const ImageTensor& clean,
                                              const ImageTensor& target);

/// Gradient proxy of one candidate layer: d/d delta of
/// 1 - cos(mean patch token of adv, mean patch token of target) at delta = 0.
std::vector<double> local_gradient_proxy(const SurrogateEncoder& encoder, std::size_t layer,
                                         const ImageTensor& clean, const ImageTensor& target);

/// Consistency scores for every candidate (encoder, layer) pair, sharing one
/// forward pass per run; pool ordered by (encoder, layer) ascending.
std::vector<CandidateScore> score_candidate_layers(const Ensemble& ensemble,
                                                   const ImageTensor& clean,
                                                   const ImageTensor& target);

// --- value-level conveniences (build their own tape) -----------------------

double global_loss_value(const Ensemble& ensemble, const ImageTensor& adv, const ImageTensor& ref);

}  // namespace praf
