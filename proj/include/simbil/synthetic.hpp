#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simbil/image.hpp"
#include "simbil/position.hpp"
#include "simbil/scenegraph.hpp"

namespace simbil::synthetic {

using Rgb = std::array<double, 3>;

struct Palette {
    std::string name;
    Rgb rgb;
};

const std::vector<Palette>& palette();
const std::vector<std::string>& shapes();

// Flat-shaded, anti-aliased primitive in pixel coordinates.
struct Shape {
    std::string id;
    std::string kind; // cube | sphere | cylinder
    std::string color;
    Rgb rgb{};
    double cx = 0, cy = 0; // centre
    double half_w = 0, half_h = 0;

    BBox bbox(int width, int height) const;
    // Fraction of the pixel covered, estimated on a 4x4 sub-grid.
    double coverage(int x, int y) const;
};

struct SceneOptions {
    int width = 64;
    int height = 64;
    int min_objects = 2;
    int max_objects = 4;
    double min_size = 10.0; // pixels, at 64x64
    double max_size = 16.0;
};

struct Scene {
    int width = 0, height = 0;
    Rgb background{};
    std::vector<Shape> shapes;
    SceneGraph graph;
    Image image;

    // Re-renders with only the listed shapes present (in scene order).
    Image render(const std::vector<std::string>& keep) const;
    Image render_without(const std::string& id) const;
    Image render_background() const { return render({}); }
    const Shape& shape(const std::string& id) const;
};

Scene generate_scene(const SceneOptions& opts, std::uint64_t seed, const std::string& image_ref = "scene.png");

// Predicate for `subject` relative to `object` along the axis of larger
// centre separation; y grows towards the viewer ("front of").
std::string dominant_predicate(const BBox& subject, const BBox& object);

// Graph pairs for position training: `original` lacks the target,
// `modified` holds it plus 1..max_refs incident edges. `degenerate` pairs
// carry a target without incident edges.
struct PositionPairOptions {
    int count = 100;
    int degenerate = 0;
    int max_refs = 3;
    std::uint64_t seed = 0;
};

std::vector<GraphPair> generate_position_pairs(const PositionPairOptions& opts);

// Writes scene_NNN.png, scene_NNN.json, scene_NNN_background.png,
// scene_NNN_without_<id>.png and scene_NNN_ops_remove.json per scene.
void write_scenes(const std::filesystem::path& dir, int count, std::uint64_t seed, const SceneOptions& opts = {});

} // namespace simbil::synthetic
