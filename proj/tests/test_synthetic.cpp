#include <gtest/gtest.h>

#include <set>

#include "simbil/segmentation.hpp"
#include "simbil/synthetic.hpp"
#include "support.hpp"

using namespace simbil;
namespace syn = simbil::synthetic;

TEST(Synthetic, SceneIsDeterministicAndValid)
{
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const syn::Scene a = syn::generate_scene({}, seed), b = syn::generate_scene({}, seed);
        EXPECT_EQ(a.image, b.image);
        EXPECT_EQ(a.graph, b.graph);
        EXPECT_NO_THROW(validate(a.graph));
        EXPECT_GE(a.shapes.size(), 2u);
        EXPECT_LE(a.shapes.size(), 4u);
        EXPECT_EQ(a.graph.width, 64);
        EXPECT_EQ(a.image, quantize8(a.image));
        std::set<std::string> colors;
        for (const auto& s : a.shapes) colors.insert(s.color);
        EXPECT_EQ(colors.size(), a.shapes.size());
        const std::size_t n = a.shapes.size();
        EXPECT_EQ(a.graph.edges.size(), n * (n - 1) / 2);
        for (const auto& e : a.graph.edges)
            EXPECT_EQ(e.predicate,
                      syn::dominant_predicate(a.graph.find(e.subject_id)->bbox, a.graph.find(e.object_id)->bbox));
    }
    EXPECT_NE(syn::generate_scene({}, 1).image, syn::generate_scene({}, 2).image);
}

TEST(Synthetic, RenderWithoutOnlyChangesTheShapesBox)
{
    const syn::Scene s = syn::generate_scene({}, 5);
    EXPECT_EQ(s.render({"obj0", "obj1", "obj2", "obj3"}), s.image);
    for (const auto& sh : s.shapes) {
        const Image without = s.render_without(sh.id);
        const PixelRect r = rasterize(s.graph.find(sh.id)->bbox, 64, 64);
        int changed = 0;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x)
                    if (without.at(c, y, x) != s.image.at(c, y, x)) {
                        ++changed;
                        EXPECT_TRUE(r.contains(x, y));
                    }
        EXPECT_GT(changed, 0);
    }
    const Image bg = s.render_background();
    for (int c = 0; c < 3; ++c)
        for (double v : bg.plane(c)) EXPECT_EQ(v, bg.plane(c)[0]);
}

TEST(Synthetic, DominantPredicate)
{
    EXPECT_EQ(syn::dominant_predicate({0.0, 0.4, 0.2, 0.6}, {0.6, 0.45, 0.8, 0.65}), "left of");
    EXPECT_EQ(syn::dominant_predicate({0.6, 0.4, 0.8, 0.6}, {0.0, 0.45, 0.2, 0.65}), "right of");
    EXPECT_EQ(syn::dominant_predicate({0.4, 0.7, 0.6, 0.9}, {0.45, 0.1, 0.65, 0.3}), "front of");
    EXPECT_EQ(syn::dominant_predicate({0.4, 0.1, 0.6, 0.3}, {0.45, 0.7, 0.65, 0.9}), "behind");
}

TEST(Synthetic, OracleMasksAreExact)
{
    SyntheticOracleBackend backend;
    const int tol = static_cast<int>(std::lround(backend.tolerance() * 255));
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const syn::Scene s = syn::generate_scene({}, seed);
        for (const auto& sh : s.shapes) {
            const ObjectNode& node = *s.graph.find(sh.id);
            const InstanceCandidate c = segment(s.image, node.category, node.bbox, backend);
            const PixelRect r = rasterize(node.bbox, 64, 64);
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x) {
                    bool close = r.contains(x, y);
                    for (int k = 0; k < 3 && close; ++k)
                        close = std::abs(std::lround(s.image.at(k, y, x) * 255) - std::lround(sh.rgb[k] * 255)) <= tol;
                    EXPECT_EQ(c.mask.hole(y, x), close) << "seed " << seed << " " << sh.id << " at " << x << "," << y;
                }
        }
    }
}

TEST(Synthetic, PositionPairs)
{
    syn::PositionPairOptions o;
    o.count = 50;
    o.degenerate = 4;
    o.seed = 3;
    const auto a = syn::generate_position_pairs(o), b = syn::generate_position_pairs(o);
    ASSERT_EQ(a.size(), 50u);
    int degenerate = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].modified, b[i].modified);
        EXPECT_EQ(a[i].original.find(a[i].target_id), nullptr);
        ASSERT_NE(a[i].modified.find(a[i].target_id), nullptr);
        const auto inc = a[i].modified.incident_edges(a[i].target_id);
        degenerate += inc.empty();
        EXPECT_LE(inc.size(), 3u);
        for (const auto& e : inc) {
            const bool subj = e.subject_id == a[i].target_id;
            const BBox& t = a[i].modified.find(a[i].target_id)->bbox;
            const BBox& ref = a[i].modified.find(subj ? e.object_id : e.subject_id)->bbox;
            EXPECT_EQ(relation_satisfied({"", e.predicate, "", subj, ref}, t), true);
        }
    }
    EXPECT_EQ(degenerate, 4);
}

TEST(Synthetic, WriteScenesIsDeterministic)
{
    test::TempDir a, b;
    syn::write_scenes(a.path(), 3, 7);
    syn::write_scenes(b.path(), 3, 7);
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(a.path())) names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    EXPECT_GE(names.size(), 3u * 5);
    for (const auto& n : names) EXPECT_EQ(read_file(a / n), read_file(b / n)) << n;
    EXPECT_TRUE(std::filesystem::exists(a / "scene_000.png"));
    EXPECT_TRUE(std::filesystem::exists(a / "scene_002_ops_remove.json"));
    const SceneGraph g = parse_scene_graph(read_text(a / "scene_001.json"));
    EXPECT_EQ(g.image_ref, "scene_001.png");
}
