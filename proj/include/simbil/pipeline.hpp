#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "simbil/image.hpp"
#include "simbil/inpaint.hpp"
#include "simbil/mask.hpp"
#include "simbil/metrics.hpp"
#include "simbil/position.hpp"
#include "simbil/scenegraph.hpp"
#include "simbil/segmentation.hpp"

namespace simbil {

enum class StepKind { segment, remove_inpaint, predict_position, paste, final_inpaint, measure };

std::string to_string(StepKind k);

struct PlanStep {
    StepKind kind = StepKind::measure;
    int op_index = -1; // -1 for measure

    bool operator==(const PlanStep&) const = default;
};

struct PipelinePlan {
    std::vector<EditOp> ops;
    std::vector<PlanStep> steps;

    bool operator==(const PipelinePlan&) const = default;
};

// Step list per op in submission order, measure last. Ops are checked by
// folding apply_edit over the graph; two ops touching the same node conflict.
PipelinePlan plan(const SceneGraph& graph, const std::vector<EditOp>& ops);

nlohmann::json serialize(const PipelinePlan& p);

struct PasteResult {
    Image image;
    Mask pasted;      // 0 where canvas pixels were overwritten
    PixelRect rect;   // target rectangle in canvas pixels
    bool vanished = false; // eroded foreground was empty; canvas unchanged
};

// Resizes crop (bilinear) and crop_mask (nearest) to the rasterized
// target_bbox, erodes the foreground (the mask's 0-set) by erosion_radius
// and composites it over canvas.
PasteResult paste_object(const Image& canvas, const Image& crop, const Mask& crop_mask, const BBox& target_bbox,
                         int erosion_radius);

struct CropSource {
    Image crop;
    Mask mask;          // object pixels are 0
    std::string origin; // human readable provenance for the job log
};

// Pixels for add / replace: explicit object_source first, then the best
// matching instance in a library of scene-graph JSON files. Relative image
// paths resolve against `asset_root`.
CropSource object_crop_source(const EditOp& op, const std::filesystem::path& library,
                              const std::filesystem::path& asset_root, SegmentationBackend& backend);

// Crop of a node's own pixels in `image`.
CropSource crop_from_image(const Image& image, const BBox& bbox, const Mask& object_mask);

struct PipelineConfig {
    InpaintSpec inpaint{};
    int erosion_radius = 1;
    std::string segmentation = "synthetic"; // synthetic | http
    std::string segmentation_url;
    std::string position_model; // checkpoint path; empty uses the geometric rule
    std::string library;        // directory of scene graphs + images for add / replace
    std::string asset_root;     // base for relative object_source paths
    int max_triplets = kDefaultMaxTriplets;

    bool operator==(const PipelineConfig&) const = default;
};

nlohmann::json serialize(const PipelineConfig& c);
// Missing keys keep the values of `base`.
PipelineConfig parse_pipeline_config(const nlohmann::json& j, PipelineConfig base = {});

// Fallback placement without a trained model: starting from `start`, move
// the box along each geometric predicate's axis until it sits on the
// demanded side of the reference, then shift it back inside the image.
BBox place_by_rules(const BBox& start, const std::vector<Triplet>& triplets);

struct PipelineProgress {
    int step = 0; // zero-based
    int steps = 0;
    StepKind kind = StepKind::measure;
    int iteration = 0;
    int iterations = 0;
    LossTerms loss;
};

struct StepRecord {
    int index = 0;
    StepKind kind = StepKind::measure;
    int op_index = -1;
    std::string dir; // relative to the job directory
    bool resumed = false;
};

struct ExecuteOptions {
    std::filesystem::path job_dir; // empty: nothing persisted
    std::function<void(const PipelineProgress&)> progress;
    SegmentationBackend* backend = nullptr;       // overrides config.segmentation
    const PositionModel* position_model = nullptr; // overrides config.position_model
};

struct ExecuteResult {
    Image image;
    SceneGraph graph_after;
    BBox roi;
    Mask touched; // 0 on every dilated hole and pasted pixel
    MetricsReport metrics;
    std::vector<StepRecord> steps;
    std::vector<std::string> log;
};

class StepError : public Error {
public:
    StepError(int step, StepKind kind, const std::string& what, Kind k)
        : Error(k, "step " + std::to_string(step) + " (" + to_string(kind) + "): " + what), step_(step), kind_(kind) {}
    int step() const { return step_; }
    StepKind kind() const { return kind_; }

private:
    int step_;
    StepKind kind_;
};

// Runs the plan. With a job directory every step persists its artifacts and
// working state under steps/NN_<name>/; completed steps found there are
// reused, so an interrupted job resumes to the same result.
ExecuteResult execute(const PipelinePlan& plan, const Image& image, const SceneGraph& graph,
                      const PipelineConfig& config, const ExecuteOptions& options = {});

} // namespace simbil
