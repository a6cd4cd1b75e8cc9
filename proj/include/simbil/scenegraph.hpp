#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "simbil/bbox.hpp"

namespace simbil {

inline constexpr int kSchemaVersion = 1;

struct ObjectNode {
    std::string id;
    std::string category;
    std::map<std::string, std::string> attributes;
    BBox bbox;

    bool operator==(const ObjectNode&) const = default;
};

struct RelationshipEdge {
    std::string subject_id;
    std::string predicate;
    std::string object_id;

    auto operator<=>(const RelationshipEdge&) const = default;
};

struct SceneGraph {
    std::string image_ref;
    int width = 0;
    int height = 0;
    std::vector<ObjectNode> nodes;
    std::vector<RelationshipEdge> edges;

    const ObjectNode* find(const std::string& id) const;
    ObjectNode* find(const std::string& id);
    bool has_edge(const RelationshipEdge& e) const;
    std::vector<RelationshipEdge> incident_edges(const std::string& id) const;

    bool operator==(const SceneGraph&) const = default;
};

// Equal up to node and edge ordering.
bool structurally_equal(const SceneGraph& a, const SceneGraph& b);

// Node-id-sorted, edge-sorted copy.
SceneGraph canonical(const SceneGraph& g);

// Throws ValidationError on any violated invariant.
void validate(const SceneGraph& g);

struct ObjectSource {
    std::string image;
    BBox bbox;

    bool operator==(const ObjectSource&) const = default;
};

enum class EditKind { remove, add, replace, relationship_change };

struct EditOp {
    EditKind kind = EditKind::remove;
    std::string target_id;
    std::optional<ObjectNode> new_node;
    std::vector<RelationshipEdge> new_edges;
    std::optional<std::pair<RelationshipEdge, RelationshipEdge>> edge_change;
    std::optional<ObjectSource> object_source;

    // The node this op manipulates (new node id for add).
    const std::string& subject_node() const { return kind == EditKind::add ? new_node->id : target_id; }

    bool operator==(const EditOp&) const = default;
};

std::string to_string(EditKind k);
EditKind edit_kind_from_string(const std::string& s);

// Checks the per-kind field presence rules.
void validate(const EditOp& op);

// Swaps old and new edges of a relationship_change.
EditOp inverse_relationship_change(const EditOp& op);

SceneGraph apply_edit(const SceneGraph& graph, const EditOp& op);

// Minimal op list such that folding apply_edit over `original` reproduces `modified`.
std::vector<EditOp> graph_diff(const SceneGraph& original, const SceneGraph& modified);

struct Triplet {
    std::string subject_category;
    std::string predicate;
    std::string object_category;
    bool target_is_subject = false;
    BBox reference_bbox;

    bool operator==(const Triplet&) const = default;
};

inline constexpr int kDefaultMaxTriplets = 5;

// Incident edges of target in `modified`, sorted by (predicate, reference id)
// and truncated to max_triplets.
std::vector<Triplet> extract_modified_triplets(const SceneGraph& original, const SceneGraph& modified,
                                               const std::string& target_id,
                                               int max_triplets = kDefaultMaxTriplets);

// JSON codecs. Parsing validates and raises ParseError with a JSON pointer.
SceneGraph parse_scene_graph(const nlohmann::json& doc);
SceneGraph parse_scene_graph(const std::string& text);
nlohmann::json serialize(const SceneGraph& g);

EditOp parse_edit_op(const nlohmann::json& doc, const std::string& path = "");
nlohmann::json serialize(const EditOp& op);

// Accepts a single op object, an array of ops, or {"ops": [...]}.
std::vector<EditOp> parse_edit_ops(const nlohmann::json& doc);
nlohmann::json serialize(const std::vector<EditOp>& ops);

ObjectNode parse_object_node(const nlohmann::json& j, const std::string& path, bool require_id = true);
nlohmann::json serialize(const ObjectNode& n);
RelationshipEdge parse_edge(const nlohmann::json& j, const std::string& path);
nlohmann::json serialize(const RelationshipEdge& e);

nlohmann::json serialize(const Triplet& t);
Triplet parse_triplet(const nlohmann::json& j, const std::string& path);

} // namespace simbil
