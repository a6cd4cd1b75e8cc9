#include "simbil/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "simbil/error.hpp"
#include "simbil/network.hpp"

namespace simbil::synthetic {

const std::vector<Palette>& palette()
{
    static const std::vector<Palette> p{
        {"gray", {87 / 255.0, 87 / 255.0, 87 / 255.0}},     {"red", {173 / 255.0, 35 / 255.0, 35 / 255.0}},
        {"blue", {42 / 255.0, 75 / 255.0, 215 / 255.0}},    {"green", {29 / 255.0, 105 / 255.0, 20 / 255.0}},
        {"brown", {129 / 255.0, 74 / 255.0, 25 / 255.0}},   {"purple", {129 / 255.0, 38 / 255.0, 192 / 255.0}},
        {"cyan", {41 / 255.0, 208 / 255.0, 208 / 255.0}},   {"yellow", {255 / 255.0, 238 / 255.0, 51 / 255.0}},
    };
    return p;
}

const std::vector<std::string>& shapes()
{
    static const std::vector<std::string> s{"cube", "sphere", "cylinder"};
    return s;
}

BBox Shape::bbox(int width, int height) const
{
    // Pixel-aligned cover of every pixel the anti-aliased edge touches.
    return clip_unit({std::floor(cx - half_w) / width, std::floor(cy - half_h) / height,
                      std::ceil(cx + half_w) / width, std::ceil(cy + half_h) / height});
}

double Shape::coverage(int x, int y) const
{
    int inside = 0;
    for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
            const double px = x + (sx + 0.5) / 4.0 - cx;
            const double py = y + (sy + 0.5) / 4.0 - cy;
            bool in = false;
            if (kind == "sphere") {
                in = (px * px) / (half_w * half_w) + (py * py) / (half_h * half_h) <= 1.0;
            } else {
                in = std::abs(px) <= half_w && std::abs(py) <= half_h;
            }
            inside += in;
        }
    return inside / 16.0;
}

Image Scene::render(const std::vector<std::string>& keep) const
{
    Image img(width, height, 3);
    for (int c = 0; c < 3; ++c)
        for (auto& v : img.plane(c)) v = background[c];
    for (const auto& s : shapes) {
        if (std::find(keep.begin(), keep.end(), s.id) == keep.end()) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.half_w)) - 1);
        const int x1 = std::min(width, static_cast<int>(std::ceil(s.cx + s.half_w)) + 1);
        const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.half_h)) - 1);
        const int y1 = std::min(height, static_cast<int>(std::ceil(s.cy + s.half_h)) + 1);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                const double a = s.coverage(x, y);
                if (a <= 0.0) continue;
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1.0 - a) * img.at(c, y, x) + a * s.rgb[c];
            }
    }
    return quantize8(img);
}

Image Scene::render_without(const std::string& id) const
{
    std::vector<std::string> keep;
    for (const auto& s : shapes)
        if (s.id != id) keep.push_back(s.id);
    return render(keep);
}

const Shape& Scene::shape(const std::string& id) const
{
    for (const auto& s : shapes)
        if (s.id == id) return s;
    throw NotFoundError("no shape '" + id + "' in scene");
}

std::string dominant_predicate(const BBox& subject, const BBox& object)
{
    const double dx = subject.center_x() - object.center_x();
    const double dy = subject.center_y() - object.center_y();
    if (std::abs(dx) >= std::abs(dy)) return dx < 0 ? "left of" : "right of";
    return dy > 0 ? "front of" : "behind";
}

namespace {

bool distinct_from(const Rgb& a, const Rgb& b, double margin)
{
    for (int c = 0; c < 3; ++c)
        if (std::abs(a[c] - b[c]) > margin) return true;
    return false;
}

int uniform_int(nn::Rng& rng, int lo, int hi)
{
    return lo + static_cast<int>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1));
}

} // namespace

Scene generate_scene(const SceneOptions& opts, std::uint64_t seed, const std::string& image_ref)
{
    if (opts.min_objects < 1 || opts.max_objects < opts.min_objects) throw ConfigError("invalid object count range");
    nn::Rng rng(seed);
    Scene scene;
    scene.width = opts.width;
    scene.height = opts.height;
    const double scale = std::min(opts.width, opts.height) / 64.0;

    // Light, slightly tinted background far enough from every palette colour.
    for (;;) {
        const double base = rng.uniform(0.62, 0.8);
        scene.background = {base + rng.uniform(-0.04, 0.04), base + rng.uniform(-0.04, 0.04),
                            base + rng.uniform(-0.04, 0.04)};
        for (auto& v : scene.background) v = std::round(v * 255.0) / 255.0;
        if (std::all_of(palette().begin(), palette().end(),
                        [&](const Palette& p) { return distinct_from(p.rgb, scene.background, 0.25); }))
            break;
    }

    const int n = uniform_int(rng, opts.min_objects, opts.max_objects);
    for (int attempt = 0; static_cast<int>(scene.shapes.size()) < n; ++attempt) {
        if (attempt > 10000) throw RuntimeError("could not place synthetic objects");
        Shape s;
        s.id = "obj" + std::to_string(scene.shapes.size());
        s.kind = shapes()[uniform_int(rng, 0, static_cast<int>(shapes().size()) - 1)];
        const auto& col = palette()[uniform_int(rng, 0, static_cast<int>(palette().size()) - 1)];
        s.color = col.name;
        s.rgb = col.rgb;
        const double size = rng.uniform(opts.min_size, opts.max_size) * scale;
        s.half_w = s.half_h = size / 2.0;
        if (s.kind == "cylinder") {
            s.half_w = 0.35 * size;
            s.half_h = 0.55 * size;
        }
        // Snap centres so edges land on the quarter-pixel grid deterministically.
        const double margin = 2.0 * scale;
        s.cx = std::round(rng.uniform(margin + s.half_w, opts.width - margin - s.half_w) * 4.0) / 4.0;
        s.cy = std::round(rng.uniform(margin + s.half_h, opts.height - margin - s.half_h) * 4.0) / 4.0;
        const double gap = 3.0 * scale;
        const bool clear = std::all_of(scene.shapes.begin(), scene.shapes.end(), [&](const Shape& o) {
            return std::abs(s.cx - o.cx) >= s.half_w + o.half_w + gap || std::abs(s.cy - o.cy) >= s.half_h + o.half_h + gap;
        });
        if (!clear) continue;
        // Same-coloured objects would merge under the colour oracle.
        if (std::any_of(scene.shapes.begin(), scene.shapes.end(), [&](const Shape& o) { return o.color == s.color; }))
            continue;
        scene.shapes.push_back(s);
    }

    scene.graph.image_ref = image_ref;
    scene.graph.width = opts.width;
    scene.graph.height = opts.height;
    for (const auto& s : scene.shapes)
        scene.graph.nodes.push_back({s.id, s.kind, {{"color", s.color}}, s.bbox(opts.width, opts.height)});
    for (std::size_t i = 0; i < scene.shapes.size(); ++i)
        for (std::size_t j = i + 1; j < scene.shapes.size(); ++j) {
            const auto& a = scene.graph.nodes[i];
            const auto& b = scene.graph.nodes[j];
            scene.graph.edges.push_back({a.id, dominant_predicate(a.bbox, b.bbox), b.id});
        }
    validate(scene.graph);

    std::vector<std::string> all;
    for (const auto& s : scene.shapes) all.push_back(s.id);
    scene.image = scene.render(all);
    return scene;
}

std::vector<GraphPair> generate_position_pairs(const PositionPairOptions& opts)
{
    if (opts.degenerate > opts.count) throw ConfigError("more degenerate pairs than pairs");
    nn::Rng rng(opts.seed);
    std::vector<GraphPair> pairs;
    for (int k = 0; k < opts.count; ++k) {
        const bool degenerate = k < opts.degenerate;
        const int refs = degenerate ? 1 : uniform_int(rng, 1, opts.max_refs);
        GraphPair p;
        SceneGraph& g = p.modified;
        g.image_ref = "pair_" + std::to_string(k);
        g.width = g.height = 256;
        auto random_box = [&] {
            const double w = rng.uniform(0.06, 0.2), h = rng.uniform(0.06, 0.2);
            const double x = rng.uniform(0.0, 1.0 - w), y = rng.uniform(0.0, 1.0 - h);
            return BBox{x, y, x + w, y + h};
        };
        for (int r = 0; r < refs; ++r) {
            const auto& col = palette()[uniform_int(rng, 0, static_cast<int>(palette().size()) - 1)];
            g.nodes.push_back({"ref" + std::to_string(r),
                               shapes()[uniform_int(rng, 0, static_cast<int>(shapes().size()) - 1)],
                               {{"color", col.name}},
                               random_box()});
        }
        p.original = g;
        p.target_id = "target";
        const ObjectNode target{"target", shapes()[uniform_int(rng, 0, static_cast<int>(shapes().size()) - 1)],
                                {{"color", palette()[uniform_int(rng, 0, 7)].name}}, random_box()};
        g.nodes.push_back(target);
        if (!degenerate) {
            for (int r = 0; r < refs; ++r) {
                const ObjectNode& ref = g.nodes[r];
                if (rng.uniform() < 0.5)
                    g.edges.push_back({target.id, dominant_predicate(target.bbox, ref.bbox), ref.id});
                else
                    g.edges.push_back({ref.id, dominant_predicate(ref.bbox, target.bbox), target.id});
            }
        }
        pairs.push_back(std::move(p));
    }
    // Interleave degenerates so they are not all at the front.
    std::vector<GraphPair> mixed;
    mixed.reserve(pairs.size());
    nn::Rng shuffle_rng(opts.seed + 1);
    while (!pairs.empty()) {
        const std::size_t i = shuffle_rng.next() % pairs.size();
        mixed.push_back(std::move(pairs[i]));
        pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return mixed;
}

void write_scenes(const std::filesystem::path& dir, int count, std::uint64_t seed, const SceneOptions& opts)
{
    if (count < 0) throw ConfigError("scene count must be non-negative");
    std::filesystem::create_directories(dir);
    for (int k = 0; k < count; ++k) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "scene_%03d", k);
        const std::string name(stem);
        const Scene s = generate_scene(opts, seed * 1000003ULL + static_cast<std::uint64_t>(k), name + ".png");
        write_png(dir / (name + ".png"), s.image);
        write_text(dir / (name + ".json"), serialize(s.graph).dump(2) + "\n");
        write_png(dir / (name + "_background.png"), s.render_background());
        for (const auto& sh : s.shapes) write_png(dir / (name + "_without_" + sh.id + ".png"), s.render_without(sh.id));
        EditOp op;
        op.kind = EditKind::remove;
        op.target_id = s.shapes.front().id;
        write_text(dir / (name + "_ops_remove.json"), serialize(std::vector<EditOp>{op}).dump(2) + "\n");
    }
}

} // namespace simbil::synthetic
