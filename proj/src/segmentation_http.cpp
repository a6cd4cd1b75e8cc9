#include "httplib.h"
#include "simbil/segmentation.hpp"

namespace simbil {

HttpSegmentationBackend::HttpSegmentationBackend(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds)
{
    if (base_url_.empty()) throw ConfigError("segmentation backend URL is empty");
}

std::vector<InstanceCandidate> HttpSegmentationBackend::candidates(const Image& image, const std::string& category,
                                                                   const BBox& bbox_hint)
{
    // Split "http://host:port/prefix" into the origin and the path prefix.
    std::string origin = base_url_, prefix;
    if (auto scheme = base_url_.find("://"); scheme != std::string::npos) {
        if (auto slash = base_url_.find('/', scheme + 3); slash != std::string::npos) {
            origin = base_url_.substr(0, slash);
            prefix = base_url_.substr(slash);
        }
    }
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(origin);
    client.set_connection_timeout(timeout_seconds_);
    client.set_read_timeout(timeout_seconds_);
    const std::string body = segmentation_request(image, category, bbox_hint).dump();
    auto res = client.Post(prefix + "/segment", body, "application/json");
    if (!res)
        throw RuntimeError("segmentation backend unreachable at " + base_url_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw RuntimeError("segmentation backend returned HTTP " + std::to_string(res->status));
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw RuntimeError(std::string("segmentation backend sent invalid JSON: ") + e.what());
    }
    return parse_segmentation_response(doc, image.width(), image.height());
}

std::unique_ptr<SegmentationBackend> make_backend(const std::string& kind, const std::string& url)
{
    if (kind == "synthetic") return std::make_unique<SyntheticOracleBackend>();
    if (kind == "http") return std::make_unique<HttpSegmentationBackend>(url);
    throw ConfigError("unknown segmentation backend '" + kind + "' (expected synthetic or http)");
}

} // namespace simbil
