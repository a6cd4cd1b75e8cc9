#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "simbil/bbox.hpp"
#include "simbil/error.hpp"
#include "simbil/image.hpp"
#include "simbil/mask.hpp"

namespace simbil {

// One detected instance. The object's pixels are the mask's 0-set so the
// mask can be used directly as a removal hole.
struct InstanceCandidate {
    std::string category;
    double score = 0.0;
    BBox bbox;
    Mask mask;
};

struct CandidateSummary {
    std::string category;
    double score = 0.0;
    BBox bbox;
};

class InstanceNotFound : public NotFoundError {
public:
    InstanceNotFound(const std::string& what, std::vector<CandidateSummary> candidates)
        : NotFoundError(what), candidates_(std::move(candidates)) {}

    const std::vector<CandidateSummary>& candidates() const { return candidates_; }

private:
    std::vector<CandidateSummary> candidates_;
};

// Among category matches: max IoU with the hint, then higher score, then the
// lexicographically smallest serialized bbox.
const InstanceCandidate& select_instance(const std::vector<InstanceCandidate>& candidates,
                                         const std::string& category, const BBox& bbox_hint);

class SegmentationBackend {
public:
    virtual ~SegmentationBackend() = default;
    virtual std::string name() const = 0;
    virtual std::vector<InstanceCandidate> candidates(const Image& image, const std::string& category,
                                                      const BBox& bbox_hint) = 0;
};

// Colour/shape oracle for flat-shaded synthetic scenes: thresholds each
// dominant non-background colour inside the hint box and keeps the largest
// 4-connected component.
class SyntheticOracleBackend : public SegmentationBackend {
public:
    explicit SyntheticOracleBackend(double color_tolerance = 0.1) : tolerance_(color_tolerance) {}

    std::string name() const override { return "synthetic"; }
    std::vector<InstanceCandidate> candidates(const Image& image, const std::string& category,
                                              const BBox& bbox_hint) override;

    double tolerance() const { return tolerance_; }

    // Shape label from fill ratio and aspect of a component's bounding rectangle.
    static std::string classify_shape(std::size_t pixels, const PixelRect& rect);

private:
    double tolerance_;
};

// Client for an external segmentation service.
//   POST <base_url>/segment  {"image": base64 PNG, "category": str, "bbox_hint": [4]}
//   -> {"candidates": [{"category", "score", "bbox", "mask": base64 PNG}]}
class HttpSegmentationBackend : public SegmentationBackend {
public:
    explicit HttpSegmentationBackend(std::string base_url, int timeout_seconds = 60);

    std::string name() const override { return "http"; }
    std::vector<InstanceCandidate> candidates(const Image& image, const std::string& category,
                                              const BBox& bbox_hint) override;

private:
    std::string base_url_;
    int timeout_seconds_;
};

std::unique_ptr<SegmentationBackend> make_backend(const std::string& kind, const std::string& url = "");

InstanceCandidate segment(const Image& image, const std::string& category, const BBox& bbox_hint,
                          SegmentationBackend& backend);

// Wire codecs shared by the client and any server implementing the contract.
nlohmann::json segmentation_request(const Image& image, const std::string& category, const BBox& bbox_hint);
nlohmann::json segmentation_response(const std::vector<InstanceCandidate>& candidates);
std::vector<InstanceCandidate> parse_segmentation_response(const nlohmann::json& doc, int width, int height);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

} // namespace simbil
