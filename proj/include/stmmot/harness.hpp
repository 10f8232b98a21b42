#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stmmot/cpn.hpp"
#include "stmmot/losses.hpp"
#include "stmmot/mem_encoder.hpp"
#include "stmmot/metrics.hpp"
#include "stmmot/params.hpp"
#include "stmmot/tracker.hpp"

namespace stmmot {

// ---- MOT-Challenge CSV ------------------------------------------------------

/// Parses `frame,id,left,top,width,height[,conf[,x,y,z[,embedding...]]]`.
/// Blank lines are skipped; frames come back in ascending order with rows in
/// file order. Unlabeled rows (id < 0) may repeat within a frame.
Sequence parse_mot(std::istream& in);
Sequence parse_mot_file(const std::filesystem::path& path);

/// Canonical text: rows sorted by (frame, id), shortest round-trip box values,
/// confidence with six decimals, then `-1,-1,-1` and any embedding values.
std::string format_mot(const Sequence& seq);
void write_mot_results(const Sequence& seq, const std::filesystem::path& path);

/// Reads a whole file; throws std::runtime_error on failure.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// ---- synthetic scenes ------------------------------------------------------

struct OcclusionEvent {
    TrackId object = 1;      ///< 1-based object id
    std::size_t start = 1;   ///< first hidden frame
    std::size_t duration = 1;
};

struct SceneConfig {
    std::size_t n_objects = 10;
    std::size_t frame_count = 100;
    double image_width = 640.0;
    double image_height = 480.0;
    double speed_min = 1.0;  ///< px / frame
    double speed_max = 4.0;
    double box_width_min = 24.0;
    double box_width_max = 48.0;
    double aspect = 2.0;        ///< height / width
    double motion_noise = 0.2;  ///< px, per-frame position perturbation
    std::vector<OcclusionEvent> occlusions;
    double box_jitter = 2.0;        ///< px, detection box noise
    double embedding_noise = 0.05;  ///< expected L2 norm of the embedding noise
    double drop_prob = 0.0;
    std::size_t embedding_dim = 64;
    std::uint64_t seed = 7;

    void validate() const;
    ImageSize image() const { return {image_width, image_height}; }
};

SceneConfig scene_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneConfig& cfg);

struct Scene {
    SceneConfig config;
    Sequence gt;                          ///< visible rows only; frames without rows omitted
    std::map<TrackId, Tensor> embeddings; ///< orthonormal identity vectors
};

/// Draws identities, then spawns and moves objects. All draws come from `rng`.
Scene generate_scene(const SceneConfig& cfg, Rng& rng);

/// Noisy, shuffled detections of the visible ground truth, one frame entry per
/// frame 1..frame_count (possibly empty). Rows carry id -1, confidence =
/// objectness, and the noisy embedding.
Sequence oracle_detections(const Scene& scene, Rng& rng);

/// Detection rows of one frame as normalized proposals.
std::vector<Proposal> to_proposals(const std::vector<AnnotationRow>& rows, const ImageSize& image,
                                   std::size_t embedding_dim);

// ---- learned-path features -------------------------------------------------

/// Supplies one [D, H, W] feature map per frame.
class FeatureSource {
public:
    virtual ~FeatureSource() = default;
    virtual std::size_t frame_count() const = 0;
    virtual std::size_t channels() const = 0;
    virtual Tensor features(std::size_t frame) const = 0;  ///< 1-based
};

/// Paints each visible object's projected identity vector into the grid
/// cells whose centers fall inside its box.
class SyntheticRenderer : public FeatureSource {
public:
    SyntheticRenderer(const Scene& scene, std::size_t channels, std::size_t grid_h, std::size_t grid_w, Rng& rng);

    std::size_t frame_count() const override { return scene_.config.frame_count; }
    std::size_t channels() const override { return projection_.dim(0); }
    Tensor features(std::size_t frame) const override;

private:
    Scene scene_;
    Tensor projection_;  ///< [D, d]
    std::size_t grid_h_, grid_w_;
};

// ---- run configuration -----------------------------------------------------

struct ModelConfig {
    std::string kind = "identity";  ///< identity | random | file
    std::string path;               ///< parameter file for kind == file
    double beta = 10.0;
    std::size_t decoder_layers = 2;
    CpnDims dims;
    std::size_t n_queries = 50;
    std::size_t svp_levels = 3;
    std::size_t pftls_per_level = 4;
    std::size_t grid = 16;  ///< learned-path feature grid side
    std::uint64_t seed = 1;
};

struct RunConfig {
    TrackerConfig tracker;
    Aggregation aggregation = Aggregation::ours;
    LossWeights losses;
    ModelConfig model;
    std::string pipeline = "oracle";  ///< oracle | learned
    SceneConfig scene;

    void validate() const;
};

/// Strict reader: `schema_version` must be 1 and unknown keys are rejected.
/// Relative paths (model file, scene file) resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Model described by the configuration, with windows and strategy applied.
TrackerModel build_model(const RunConfig& cfg);

/// Runs the oracle path over frames 1..frame_count. Detection frames beyond
/// `frame_count` extend the run.
Sequence track_detections(const Sequence& detections, std::size_t frame_count, const RunConfig& cfg,
                          const TrackerModel& model);

/// Runs the learned path over every frame of the source.
Sequence track_features(const FeatureSource& source, const RunConfig& cfg, const TrackerModel& model);

/// Convenience: generate the configured scene, then track it on the configured pipeline.
Sequence track_synthetic(const RunConfig& cfg, const TrackerModel& model);

std::vector<AnnotationRow> to_rows(const std::vector<TrackOutput>& outputs, const ImageSize& image);

}  // namespace stmmot
