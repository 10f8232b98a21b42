#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stmmot/box.hpp"
#include "stmmot/tracker.hpp"

namespace stmmot {

struct LossWeights {
    double cls = 3.0;
    double l1 = 6.0;
    double iou = 3.0;
    double track = 2.0;
    double det = 2.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    /// Drops the auxiliary detection term, as at inference time.
    bool detach_aux = false;

    double effective_det() const { return detach_aux ? 0.0 : det; }
    void validate() const;
};

struct ScalarLoss {
    double value = 0.0;
    double grad = 0.0;  ///< d value / d p
};

struct BoxLoss {
    double value = 0.0;
    std::array<double, 4> grad{};  ///< d value / d (cx, cy, w, h)
};

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] by callers.
inline constexpr double kProbClamp = 1e-7;

/// y = 1: -a (1-p)^g log p;  y = 0: -(1-a) p^g log(1-p). Requires 0 < p < 1.
ScalarLoss focal_loss(double p, int y, double alpha, double gamma);

/// Sum of absolute coordinate differences; subgradient 0 at ties.
BoxLoss l1_box_loss(const Box& pred, const Box& gt);

/// 1 - GIoU. Degenerate pairs (no union, no enclosure) give value 1 and zero gradient.
BoxLoss giou_loss(const Box& pred, const Box& gt);

struct EntryGrad {
    double objectness = 0.0;
    double uniqueness = 0.0;
    std::array<double, 4> box{};
};

struct LossReport {
    double obj = 0.0;   ///< summed focal objectness loss
    double uni = 0.0;   ///< summed focal uniqueness loss (candidates with a target)
    double bbox = 0.0;  ///< summed L1 over entries with a box target
    double iou = 0.0;   ///< summed 1 - GIoU over the same entries
    double raw = 0.0;   ///< weighted sum before normalization
    double total = 0.0; ///< raw / max(N_t, 1)
    std::size_t visible = 0;
    std::vector<EntryGrad> grads;  ///< d total / d prediction, per entry
};

/// cls (L_obj + L_uni) + l1 (L_bbox + L_iou), normalized by the visible count.
LossReport track_loss(const std::vector<QueryEntry>& entries, const Supervision& sup, const LossWeights& w);

/// cls L_obj + l1 L_bbox + iou L_iou, normalized by the visible count.
LossReport det_loss(const std::vector<QueryEntry>& entries, const Supervision& sup, const LossWeights& w);

/// track * (sum of raw track losses) / (sum of N_t) + det * (sum of det losses).
double seq_loss(const std::vector<LossReport>& track, const std::vector<LossReport>& det, const LossWeights& w);

nlohmann::json to_json(const LossReport& r);

}  // namespace stmmot
