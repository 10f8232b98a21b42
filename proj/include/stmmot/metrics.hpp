#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stmmot/box.hpp"
#include "stmmot/memory.hpp"

namespace stmmot {

struct AnnotationRow {
    TrackId id = -1;
    PixelBox box;
    double confidence = 1.0;
    std::vector<double> embedding;  ///< optional appearance vector (detection files)

    friend bool operator==(const AnnotationRow&, const AnnotationRow&) = default;
};

struct FrameAnnotations {
    std::size_t frame = 0;
    std::vector<AnnotationRow> rows;

    friend bool operator==(const FrameAnnotations&, const FrameAnnotations&) = default;
};

using Sequence = std::vector<FrameAnnotations>;

/// Throws std::invalid_argument naming the first prediction frame that lies
/// outside the ground-truth frame range.
void check_frame_alignment(const Sequence& gt, const Sequence& pred);

struct FrameMatch {
    std::size_t frame = 0;
    std::vector<std::pair<TrackId, TrackId>> matches;  ///< (gt id, pred id)
    std::size_t gt = 0, fp = 0, fn = 0, idsw = 0;
};

struct ClearCounts {
    std::size_t gt = 0, fp = 0, fn = 0, idsw = 0, matches = 0;
};

struct ClearResult {
    std::vector<FrameMatch> frames;
    ClearCounts totals;
};

/// CLEAR-MOT matching: previous correspondences persist while IoU stays at or
/// above the threshold, the rest are matched by Hungarian on 1 - IoU.
ClearResult match_frames(const Sequence& gt, const Sequence& pred, double iou_threshold = 0.5);

/// 1 - (FP + FN + IDSW) / GT. Throws std::invalid_argument when GT is zero.
double mota(const ClearCounts& counts);

struct IdentityScores {
    double idf1 = 0.0;
    std::size_t idtp = 0, idfp = 0, idfn = 0;
    std::vector<std::pair<TrackId, TrackId>> mapping;  ///< (gt id, pred id), sorted
};

IdentityScores idf1(const Sequence& gt, const Sequence& pred, double iou_threshold = 0.5);

struct HotaScores {
    double hota = 0.0, deta = 0.0, assa = 0.0;
    std::array<double, 19> alphas{};
    std::array<double, 19> hota_alpha{}, deta_alpha{}, assa_alpha{};
};

HotaScores hota(const Sequence& gt, const Sequence& pred);

struct MetricReport {
    double mota = 0.0, idf1 = 0.0, hota = 0.0, deta = 0.0, assa = 0.0;
    std::size_t gt = 0, fp = 0, fn = 0, idsw = 0, idtp = 0, idfp = 0, idfn = 0;
};

MetricReport evaluate(const Sequence& gt, const Sequence& pred, double iou_threshold = 0.5);

nlohmann::json to_json(const MetricReport& r);
/// Header line and value line of the CSV summary.
std::pair<std::string, std::string> to_csv(const MetricReport& r);

}  // namespace stmmot
