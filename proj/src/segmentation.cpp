#include "simbil/segmentation.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <tuple>

namespace simbil {

using nlohmann::json;

const InstanceCandidate& select_instance(const std::vector<InstanceCandidate>& candidates,
                                         const std::string& category, const BBox& bbox_hint)
{
    const InstanceCandidate* best = nullptr;
    double best_iou = -1.0;
    std::string best_key;
    for (const auto& c : candidates) {
        if (c.category != category) continue;
        const double v = iou(c.bbox, bbox_hint);
        const std::string key = json(c.bbox).dump();
        const bool better = !best || v > best_iou || (v == best_iou && c.score > best->score) ||
                            (v == best_iou && c.score == best->score && key < best_key);
        if (better) {
            best = &c;
            best_iou = v;
            best_key = key;
        }
    }
    if (!best) {
        std::vector<CandidateSummary> summary;
        for (const auto& c : candidates) summary.push_back({c.category, c.score, c.bbox});
        throw InstanceNotFound("no instance of category '" + category + "' found", std::move(summary));
    }
    return *best;
}

std::string SyntheticOracleBackend::classify_shape(std::size_t pixels, const PixelRect& rect)
{
    const double fill = static_cast<double>(pixels) / (static_cast<double>(rect.width()) * rect.height());
    const double aspect = static_cast<double>(rect.height()) / rect.width();
    if (fill < 0.88) return "sphere";
    if (aspect > 1.2) return "cylinder";
    return "cube";
}

std::vector<InstanceCandidate> SyntheticOracleBackend::candidates(const Image& image, const std::string& category,
                                                                  const BBox& bbox_hint)
{
    (void)category;
    require_valid(bbox_hint, "bbox_hint");
    const int w = image.width(), h = image.height(), ch = image.channels();
    using Color = std::array<int, 3>;
    auto color_at = [&](int y, int x) {
        Color c{0, 0, 0};
        for (int k = 0; k < ch && k < 3; ++k) c[k] = static_cast<int>(std::lround(image.at(k, y, x) * 255.0));
        return c;
    };
    const int tol = static_cast<int>(std::lround(tolerance_ * 255.0));
    auto close = [&](const Color& a, const Color& b) {
        for (int k = 0; k < 3; ++k)
            if (std::abs(a[k] - b[k]) > tol) return false;
        return true;
    };

    // Background: most frequent border colour.
    std::map<Color, int> border;
    for (int x = 0; x < w; ++x) {
        ++border[color_at(0, x)];
        ++border[color_at(h - 1, x)];
    }
    for (int y = 0; y < h; ++y) {
        ++border[color_at(y, 0)];
        ++border[color_at(y, w - 1)];
    }
    const Color background =
        std::max_element(border.begin(), border.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;

    const PixelRect rect = rasterize(bbox_hint, w, h);
    if (rect.empty()) return {};
    std::map<Color, int> hist;
    for (int y = rect.y0; y < rect.y1; ++y)
        for (int x = rect.x0; x < rect.x1; ++x) {
            const Color c = color_at(y, x);
            if (!close(c, background)) ++hist[c];
        }
    std::vector<std::pair<Color, int>> ranked(hist.begin(), hist.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.second > b.second; });

    const int min_count = std::max(4, static_cast<int>(0.02 * rect.width() * rect.height()));
    std::vector<Color> seeds;
    for (const auto& [c, n] : ranked) {
        if (n < min_count) break;
        if (std::none_of(seeds.begin(), seeds.end(), [&](const Color& s) { return close(s, c); })) seeds.push_back(c);
    }

    std::vector<InstanceCandidate> out;
    for (const Color& seed : seeds) {
        const int rw = rect.width(), rh = rect.height();
        std::vector<std::uint8_t> on(static_cast<std::size_t>(rw) * rh, 0);
        std::size_t thresholded = 0;
        for (int y = 0; y < rh; ++y)
            for (int x = 0; x < rw; ++x)
                if (close(color_at(rect.y0 + y, rect.x0 + x), seed)) {
                    on[static_cast<std::size_t>(y) * rw + x] = 1;
                    ++thresholded;
                }
        // Largest 4-connected component; first found wins ties.
        std::vector<int> label(on.size(), -1);
        std::vector<int> best_pixels;
        for (std::size_t start = 0; start < on.size(); ++start) {
            if (!on[start] || label[start] >= 0) continue;
            std::vector<int> comp{static_cast<int>(start)};
            label[start] = static_cast<int>(start);
            for (std::size_t head = 0; head < comp.size(); ++head) {
                const int p = comp[head], py = p / rw, px = p % rw;
                const std::array<std::pair<int, int>, 4> nbrs{{{py - 1, px}, {py + 1, px}, {py, px - 1}, {py, px + 1}}};
                for (auto [ny, nx] : nbrs) {
                    if (ny < 0 || nx < 0 || ny >= rh || nx >= rw) continue;
                    const int q = ny * rw + nx;
                    if (on[q] && label[q] < 0) {
                        label[q] = static_cast<int>(start);
                        comp.push_back(q);
                    }
                }
            }
            if (comp.size() > best_pixels.size()) best_pixels = std::move(comp);
        }
        if (best_pixels.empty()) continue;

        InstanceCandidate cand;
        cand.mask = Mask(w, h, 1);
        PixelRect bounds{w, h, 0, 0};
        for (int p : best_pixels) {
            const int y = rect.y0 + p / rw, x = rect.x0 + p % rw;
            cand.mask.at(y, x) = 0;
            bounds.x0 = std::min(bounds.x0, x);
            bounds.y0 = std::min(bounds.y0, y);
            bounds.x1 = std::max(bounds.x1, x + 1);
            bounds.y1 = std::max(bounds.y1, y + 1);
        }
        cand.bbox = normalize(bounds, w, h);
        cand.category = classify_shape(best_pixels.size(), bounds);
        cand.score = static_cast<double>(best_pixels.size()) / static_cast<double>(thresholded);
        out.push_back(std::move(cand));
    }
    return out;
}

InstanceCandidate segment(const Image& image, const std::string& category, const BBox& bbox_hint,
                          SegmentationBackend& backend)
{
    require_valid(bbox_hint, "bbox_hint");
    const auto candidates = backend.candidates(image, category, bbox_hint);
    return select_instance(candidates, category, bbox_hint);
}

std::string base64_encode(std::span<const std::uint8_t> bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text)
{
    if (text.size() % 4 != 0) throw ValidationError("invalid base64 payload");
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw ValidationError("invalid base64 payload");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

json segmentation_request(const Image& image, const std::string& category, const BBox& bbox_hint)
{
    return {{"image", base64_encode(encode_png(image))}, {"category", category}, {"bbox_hint", bbox_hint}};
}

json segmentation_response(const std::vector<InstanceCandidate>& candidates)
{
    json arr = json::array();
    for (const auto& c : candidates)
        arr.push_back({{"category", c.category}, {"score", c.score}, {"bbox", c.bbox},
                       {"mask", base64_encode(encode_mask_png(c.mask))}});
    return {{"candidates", arr}};
}

std::vector<InstanceCandidate> parse_segmentation_response(const json& doc, int width, int height)
{
    if (!doc.is_object() || !doc.contains("candidates") || !doc["candidates"].is_array())
        throw ValidationError("segmentation response lacks a candidates array");
    std::vector<InstanceCandidate> out;
    for (const auto& c : doc["candidates"]) {
        InstanceCandidate cand;
        cand.category = c.at("category").get<std::string>();
        cand.score = c.at("score").get<double>();
        cand.bbox = c.at("bbox").get<BBox>();
        cand.mask = decode_mask_png(base64_decode(c.at("mask").get<std::string>()));
        if (cand.score < 0.0 || cand.score > 1.0) throw ValidationError("candidate score outside [0, 1]");
        if (cand.mask.width() != width || cand.mask.height() != height)
            throw ValidationError("candidate mask does not match image size");
        require_valid(cand.bbox, "candidate");
        out.push_back(std::move(cand));
    }
    return out;
}

} // namespace simbil
