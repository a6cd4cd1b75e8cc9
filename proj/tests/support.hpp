#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <vector>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "simbil/image.hpp"
#include "simbil/mask.hpp"
#include "simbil/scenegraph.hpp"

namespace simbil::test {

// Scratch directory removed on scope exit.
class TempDir {
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("simbil-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Image random_image(std::mt19937_64& rng, int w, int h, int c = 3)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h, c);
    for (int k = 0; k < c; ++k)
        for (auto& v : img.plane(k)) v = u(rng);
    return img;
}

inline Mask random_mask(std::mt19937_64& rng, int w, int h, double hole_fraction)
{
    std::bernoulli_distribution hole(hole_fraction);
    Mask m(w, h, 1);
    for (auto& v : m.data()) v = hole(rng) ? 0 : 1;
    return m;
}

// The CLEVR-style three object graph used across several tests.
inline SceneGraph clevr_graph()
{
    SceneGraph g;
    g.image_ref = "clevr.png";
    g.width = 64;
    g.height = 64;
    g.nodes = {{"cyl", "cylinder", {{"color", "blue"}}, {0.1, 0.5, 0.3, 0.9}},
               {"cube", "cube", {{"color", "red"}}, {0.5, 0.2, 0.7, 0.4}},
               {"ball", "sphere", {{"color", "green"}}, {0.7, 0.6, 0.9, 0.8}}};
    g.edges = {{"cyl", "front of", "cube"}, {"cyl", "left of", "ball"}, {"ball", "right of", "cube"}};
    return g;
}


inline const std::vector<std::string>& test_categories()
{
    static const std::vector<std::string> v{"cube", "sphere", "cylinder", "cone", "tree", "dog"};
    return v;
}

inline const std::vector<std::string>& test_predicates()
{
    static const std::vector<std::string> v{"left of", "right of", "front of", "behind", "on", "near"};
    return v;
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v)
{
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline BBox random_bbox(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    return {a, c, b, d};
}

inline std::map<std::string, std::string> random_attributes(std::mt19937_64& rng)
{
    static const std::vector<std::string> colors{"red", "blue", "green", "gray"};
    static const std::vector<std::string> sizes{"small", "large"};
    std::map<std::string, std::string> a;
    if (rng() % 2) a["color"] = pick(rng, colors);
    if (rng() % 2) a["size"] = pick(rng, sizes);
    return a;
}

// Valid graph with 1..7 nodes and random distinct edges.
inline SceneGraph random_graph(std::mt19937_64& rng)
{
    SceneGraph g;
    g.image_ref = "img.png";
    g.width = 64;
    g.height = 48;
    const int n = 1 + static_cast<int>(rng() % 7);
    for (int i = 0; i < n; ++i)
        g.nodes.push_back({"n" + std::to_string(i), pick(rng, test_categories()), random_attributes(rng),
                           random_bbox(rng)});
    const int tries = static_cast<int>(rng() % 12);
    for (int k = 0; k < tries && n > 1; ++k) {
        RelationshipEdge e{pick(rng, g.nodes).id, pick(rng, test_predicates()), pick(rng, g.nodes).id};
        if (e.subject_id != e.object_id && !g.has_edge(e)) g.edges.push_back(e);
    }
    std::shuffle(g.edges.begin(), g.edges.end(), rng);
    return g;
}

// Random op valid against g; new node ids come from `fresh`.
inline EditOp random_op(std::mt19937_64& rng, const SceneGraph& g, int& fresh)
{
    for (;;) {
        EditOp op;
        switch (rng() % 4) {
        case 0:
            if (g.nodes.empty()) continue;
            op.kind = EditKind::remove;
            op.target_id = pick(rng, g.nodes).id;
            return op;
        case 1: {
            if (g.nodes.empty()) continue;
            op.kind = EditKind::replace;
            const ObjectNode& n = pick(rng, g.nodes);
            op.target_id = n.id;
            op.new_node = ObjectNode{n.id, pick(rng, test_categories()), random_attributes(rng), n.bbox};
            return op;
        }
        case 2: {
            if (g.edges.empty()) continue;
            const RelationshipEdge from = pick(rng, g.edges);
            RelationshipEdge to = from;
            if (rng() % 2)
                to = {from.object_id, from.predicate, from.subject_id};
            else
                to.predicate = pick(rng, test_predicates());
            if (to == from || g.has_edge(to)) continue;
            op.kind = EditKind::relationship_change;
            op.target_id = rng() % 2 ? from.subject_id : from.object_id;
            op.edge_change = std::make_pair(from, to);
            return op;
        }
        default: {
            op.kind = EditKind::add;
            const std::string id = "new" + std::to_string(fresh++);
            op.new_node = ObjectNode{id, pick(rng, test_categories()), random_attributes(rng), random_bbox(rng)};
            const int edges = g.nodes.empty() ? 0 : static_cast<int>(rng() % 3);
            for (int k = 0; k < edges; ++k) {
                const std::string& other = pick(rng, g.nodes).id;
                RelationshipEdge e = rng() % 2 ? RelationshipEdge{id, pick(rng, test_predicates()), other}
                                               : RelationshipEdge{other, pick(rng, test_predicates()), id};
                if (std::find(op.new_edges.begin(), op.new_edges.end(), e) == op.new_edges.end())
                    op.new_edges.push_back(e);
            }
            return op;
        }
        }
    }
}

struct RandomPair {
    SceneGraph original;
    SceneGraph modified;
    std::vector<EditOp> ops;
};

// Original graph plus the result of 0..3 random edits.
inline RandomPair random_pair(std::mt19937_64& rng)
{
    RandomPair p;
    p.original = random_graph(rng);
    p.modified = p.original;
    int fresh = 0;
    const int n = static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) {
        EditOp op = random_op(rng, p.modified, fresh);
        p.modified = apply_edit(p.modified, op);
        p.ops.push_back(std::move(op));
    }
    return p;
}

} // namespace simbil::test
