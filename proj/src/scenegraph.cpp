#include "simbil/scenegraph.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <optional>
#include <tuple>
#include <variant>

#include "simbil/error.hpp"

namespace simbil {

using nlohmann::json;

const ObjectNode* SceneGraph::find(const std::string& id) const
{
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const ObjectNode& n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
}

ObjectNode* SceneGraph::find(const std::string& id)
{
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const ObjectNode& n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
}

bool SceneGraph::has_edge(const RelationshipEdge& e) const
{
    return std::find(edges.begin(), edges.end(), e) != edges.end();
}

std::vector<RelationshipEdge> SceneGraph::incident_edges(const std::string& id) const
{
    std::vector<RelationshipEdge> out;
    for (const auto& e : edges)
        if (e.subject_id == id || e.object_id == id) out.push_back(e);
    return out;
}

SceneGraph canonical(const SceneGraph& g)
{
    SceneGraph c = g;
    std::sort(c.nodes.begin(), c.nodes.end(), [](const ObjectNode& a, const ObjectNode& b) { return a.id < b.id; });
    std::sort(c.edges.begin(), c.edges.end());
    return c;
}

bool structurally_equal(const SceneGraph& a, const SceneGraph& b)
{
    return canonical(a) == canonical(b);
}

void validate(const SceneGraph& g)
{
    if (g.width <= 0 || g.height <= 0) throw ValidationError("graph width and height must be positive");
    std::set<std::string> ids;
    for (const auto& n : g.nodes) {
        if (n.id.empty()) throw ValidationError("node id must be non-empty");
        if (!ids.insert(n.id).second) throw ValidationError("duplicate node id '" + n.id + "'");
        require_valid(n.bbox, "node '" + n.id + "'");
    }
    std::set<RelationshipEdge> seen;
    for (const auto& e : g.edges) {
        const std::string label = "edge (" + e.subject_id + ", " + e.predicate + ", " + e.object_id + ")";
        if (!ids.count(e.subject_id) || !ids.count(e.object_id))
            throw ValidationError(label + " references a missing node");
        if (e.subject_id == e.object_id) throw ValidationError(label + " is a self loop");
        if (e.predicate.empty()) throw ValidationError(label + " has an empty predicate");
        if (!seen.insert(e).second) throw ValidationError("duplicate " + label);
    }
}

std::string to_string(EditKind k)
{
    switch (k) {
    case EditKind::remove: return "remove";
    case EditKind::add: return "add";
    case EditKind::replace: return "replace";
    case EditKind::relationship_change: return "relationship_change";
    }
    return "?";
}

EditKind edit_kind_from_string(const std::string& s)
{
    if (s == "remove") return EditKind::remove;
    if (s == "add") return EditKind::add;
    if (s == "replace") return EditKind::replace;
    if (s == "relationship_change") return EditKind::relationship_change;
    throw ParseError("/kind", "unknown edit kind '" + s + "'");
}

void validate(const EditOp& op)
{
    switch (op.kind) {
    case EditKind::remove:
        if (op.target_id.empty()) throw ValidationError("remove requires target_id");
        if (op.new_node || !op.new_edges.empty() || op.edge_change || op.object_source)
            throw ValidationError("remove takes only target_id");
        break;
    case EditKind::add:
        if (!op.new_node) throw ValidationError("add requires new_node");
        if (op.new_node->id.empty()) throw ValidationError("add requires new_node.id");
        if (op.edge_change) throw ValidationError("add does not take edge_change");
        require_valid(op.new_node->bbox, "add new_node");
        for (const auto& e : op.new_edges)
            if (e.subject_id != op.new_node->id && e.object_id != op.new_node->id)
                throw ValidationError("add new_edges must be incident to the new node");
        break;
    case EditKind::replace:
        if (op.target_id.empty()) throw ValidationError("replace requires target_id");
        if (!op.new_node) throw ValidationError("replace requires new_node");
        if (!op.new_node->id.empty() && op.new_node->id != op.target_id)
            throw ValidationError("replace new_node.id must match target_id");
        if (!op.new_edges.empty() || op.edge_change) throw ValidationError("replace takes no edges");
        break;
    case EditKind::relationship_change: {
        if (op.target_id.empty()) throw ValidationError("relationship_change requires target_id");
        if (!op.edge_change) throw ValidationError("relationship_change requires edge_change");
        if (op.new_node || !op.new_edges.empty() || op.object_source)
            throw ValidationError("relationship_change takes only target_id and edge_change");
        const auto& [from, to] = *op.edge_change;
        const bool predicate_only =
            from.subject_id == to.subject_id && from.object_id == to.object_id && from.predicate != to.predicate;
        const bool orientation_only =
            from.subject_id == to.object_id && from.object_id == to.subject_id && from.predicate == to.predicate;
        if (!predicate_only && !orientation_only)
            throw ValidationError("edge_change must differ only in predicate or only in orientation");
        if (from.subject_id != op.target_id && from.object_id != op.target_id)
            throw ValidationError("relationship_change target must be an endpoint of the changed edge");
        break;
    }
    }
}

EditOp inverse_relationship_change(const EditOp& op)
{
    if (op.kind != EditKind::relationship_change || !op.edge_change)
        throw ValidationError("inverse only defined for relationship_change");
    EditOp inv = op;
    std::swap(inv.edge_change->first, inv.edge_change->second);
    return inv;
}

SceneGraph apply_edit(const SceneGraph& graph, const EditOp& op)
{
    validate(op);
    SceneGraph g = graph;
    switch (op.kind) {
    case EditKind::remove: {
        if (!g.find(op.target_id)) throw NotFoundError("remove: node '" + op.target_id + "' not found");
        std::erase_if(g.nodes, [&](const ObjectNode& n) { return n.id == op.target_id; });
        std::erase_if(g.edges, [&](const RelationshipEdge& e) {
            return e.subject_id == op.target_id || e.object_id == op.target_id;
        });
        break;
    }
    case EditKind::add: {
        if (g.find(op.new_node->id)) throw ConflictError("add: node id '" + op.new_node->id + "' already in use");
        g.nodes.push_back(*op.new_node);
        for (const auto& e : op.new_edges) g.edges.push_back(e);
        validate(g);
        break;
    }
    case EditKind::replace: {
        ObjectNode* n = g.find(op.target_id);
        if (!n) throw NotFoundError("replace: node '" + op.target_id + "' not found");
        n->category = op.new_node->category;
        n->attributes = op.new_node->attributes;
        break;
    }
    case EditKind::relationship_change: {
        const auto& [from, to] = *op.edge_change;
        if (!g.find(op.target_id)) throw NotFoundError("relationship_change: node '" + op.target_id + "' not found");
        auto it = std::find(g.edges.begin(), g.edges.end(), from);
        if (it == g.edges.end())
            throw NotFoundError("relationship_change: edge (" + from.subject_id + ", " + from.predicate + ", " +
                                from.object_id + ") not found");
        if (g.has_edge(to)) throw ConflictError("relationship_change: replacement edge already exists");
        *it = to;
        break;
    }
    }
    return g;
}

namespace {

using Rebuild = std::string; // node that has to be removed and re-added

bool same_pair(const RelationshipEdge& a, const RelationshipEdge& b)
{
    return (a.subject_id == b.subject_id && a.object_id == b.object_id) ||
           (a.subject_id == b.object_id && a.object_id == b.subject_id);
}

// One relationship change suffices: predicate-only or orientation-only.
bool one_step(const RelationshipEdge& from, const RelationshipEdge& to)
{
    const bool predicate_only = from.subject_id == to.subject_id && from.object_id == to.object_id;
    const bool orientation_only =
        from.subject_id == to.object_id && from.object_id == to.subject_id && from.predicate == to.predicate;
    return predicate_only || orientation_only;
}

std::variant<std::vector<EditOp>, Rebuild> diff_with(const SceneGraph& original, const SceneGraph& modified,
                                                    const std::set<std::string>& rebuilt)
{
    const SceneGraph orig_c = canonical(original), mod_c = canonical(modified);
    auto survives = [&](const std::string& id) {
        return original.find(id) && modified.find(id) && !rebuilt.count(id);
    };

    std::vector<RelationshipEdge> dropped, gained;
    for (const auto& e : orig_c.edges)
        if (survives(e.subject_id) && survives(e.object_id) && !modified.has_edge(e)) dropped.push_back(e);
    for (const auto& e : mod_c.edges)
        if (survives(e.subject_id) && survives(e.object_id) && !original.has_edge(e)) gained.push_back(e);

    // Changes never leave a node pair, so dropped and gained edges pair up
    // within each unordered pair. One-step pairs are preferred through a
    // maximum bipartite matching; the rest take two steps.
    std::vector<int> owner(gained.size(), -1);
    std::function<bool(std::size_t, std::vector<char>&)> augment = [&](std::size_t d, std::vector<char>& seen) {
        for (std::size_t g = 0; g < gained.size(); ++g) {
            if (seen[g] || !one_step(dropped[d], gained[g])) continue;
            seen[g] = 1;
            if (owner[g] < 0 || augment(static_cast<std::size_t>(owner[g]), seen)) {
                owner[g] = static_cast<int>(d);
                return true;
            }
        }
        return false;
    };
    for (std::size_t d = 0; d < dropped.size(); ++d) {
        std::vector<char> seen(gained.size(), 0);
        augment(d, seen);
    }
    std::vector<char> used(dropped.size(), 0);
    for (int o : owner)
        if (o >= 0) used[static_cast<std::size_t>(o)] = 1;
    for (std::size_t g = 0; g < gained.size(); ++g) {
        if (owner[g] >= 0) continue;
        for (std::size_t d = 0; d < dropped.size(); ++d)
            if (!used[d] && same_pair(dropped[d], gained[g])) {
                owner[g] = static_cast<int>(d);
                used[d] = 1;
                break;
            }
        if (owner[g] < 0) return gained[g].subject_id;
    }
    for (std::size_t d = 0; d < dropped.size(); ++d)
        if (!used[d]) return dropped[d].subject_id;

    std::vector<EditOp> ops;
    SceneGraph work = original;
    auto emit = [&](EditOp op) {
        work = apply_edit(work, op);
        ops.push_back(std::move(op));
    };
    auto change = [&](const RelationshipEdge& from, const RelationshipEdge& to) {
        EditOp op;
        op.kind = EditKind::relationship_change;
        op.target_id = to.subject_id;
        op.edge_change = std::make_pair(from, to);
        emit(op);
    };

    for (const auto& n : orig_c.nodes) {
        if (modified.find(n.id) && !rebuilt.count(n.id)) continue;
        EditOp op;
        op.kind = EditKind::remove;
        op.target_id = n.id;
        emit(op);
    }
    for (const auto& n : orig_c.nodes) {
        if (!survives(n.id)) continue;
        const ObjectNode* m = modified.find(n.id);
        if (m->category == n.category && m->attributes == n.attributes) continue;
        EditOp op;
        op.kind = EditKind::replace;
        op.target_id = n.id;
        op.new_node = ObjectNode{n.id, m->category, m->attributes, n.bbox};
        emit(op);
    }
    for (std::size_t g = 0; g < gained.size(); ++g) {
        const RelationshipEdge& from = dropped[static_cast<std::size_t>(owner[g])];
        const RelationshipEdge& to = gained[g];
        if (one_step(from, to)) {
            change(from, to);
            continue;
        }
        // Flip then re-label, or re-label then flip, whichever intermediate is free.
        const RelationshipEdge flip_first{from.object_id, from.predicate, from.subject_id};
        const RelationshipEdge label_first{from.subject_id, to.predicate, from.object_id};
        const RelationshipEdge& mid = !work.has_edge(flip_first) ? flip_first : label_first;
        if (work.has_edge(mid)) return from.subject_id;
        change(from, mid);
        change(mid, to);
    }

    std::vector<std::string> added;
    for (const auto& n : mod_c.nodes)
        if (!original.find(n.id) || rebuilt.count(n.id)) added.push_back(n.id);
    for (std::size_t k = 0; k < added.size(); ++k) {
        const auto later = [&](const std::string& id) {
            return std::find(added.begin() + static_cast<std::ptrdiff_t>(k) + 1, added.end(), id) != added.end();
        };
        EditOp op;
        op.kind = EditKind::add;
        op.new_node = *modified.find(added[k]);
        for (const auto& e : mod_c.edges) {
            if (e.subject_id != added[k] && e.object_id != added[k]) continue;
            const std::string& other = e.subject_id == added[k] ? e.object_id : e.subject_id;
            if (!later(other)) op.new_edges.push_back(e);
        }
        emit(op);
    }
    if (!structurally_equal(work, modified))
        throw ValidationError("graph_diff: difference is not expressible as edits");
    return ops;
}

} // namespace

std::vector<EditOp> graph_diff(const SceneGraph& original, const SceneGraph& modified)
{
    if (original.image_ref != modified.image_ref)
        throw ValidationError("graph_diff: graphs reference different images");
    for (const auto& n : original.nodes) {
        const ObjectNode* m = modified.find(n.id);
        if (m && !(m->bbox == n.bbox))
            throw ValidationError("graph_diff: bbox change of node '" + n.id + "' is not expressible as an edit");
    }
    // Each round either succeeds or names one more node to rebuild, so this
    // terminates after at most one round per node.
    std::set<std::string> rebuilt;
    for (;;) {
        auto r = diff_with(original, modified, rebuilt);
        if (auto* ops = std::get_if<std::vector<EditOp>>(&r)) return std::move(*ops);
        const std::string id = std::get<Rebuild>(r);
        if (!rebuilt.insert(id).second)
            throw ValidationError("graph_diff: difference is not expressible as edits");
    }
}

std::vector<Triplet> extract_modified_triplets(const SceneGraph& original, const SceneGraph& modified,
                                               const std::string& target_id, int max_triplets)
{
    (void)original;
    if (max_triplets < 1) throw ValidationError("max_triplets must be at least 1");
    if (!modified.find(target_id)) throw NotFoundError("target '" + target_id + "' not in modified graph");

    struct Keyed {
        std::string predicate;
        std::string reference;
        bool target_is_subject;
        RelationshipEdge edge;
    };
    std::vector<Keyed> keyed;
    for (const auto& e : modified.incident_edges(target_id)) {
        const bool is_subject = e.subject_id == target_id;
        keyed.push_back({e.predicate, is_subject ? e.object_id : e.subject_id, is_subject, e});
    }
    if (keyed.empty())
        throw ValidationError("target '" + target_id + "' has no incident edges; position prediction is undefined");

    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        return std::tie(a.predicate, a.reference, b.target_is_subject) <
               std::tie(b.predicate, b.reference, a.target_is_subject);
    });
    if (keyed.size() > static_cast<std::size_t>(max_triplets)) keyed.resize(max_triplets);

    std::vector<Triplet> out;
    for (const auto& k : keyed) {
        const ObjectNode* s = modified.find(k.edge.subject_id);
        const ObjectNode* o = modified.find(k.edge.object_id);
        out.push_back({s->category, k.predicate, o->category, k.target_is_subject,
                       modified.find(k.reference)->bbox});
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const json& field(const json& j, const char* key, const std::string& path)
{
    if (!j.is_object()) throw ParseError(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(path + "/" + key, "missing required field");
    return *it;
}

std::string string_field(const json& j, const char* key, const std::string& path)
{
    const json& v = field(j, key, path);
    if (!v.is_string()) throw ParseError(path + "/" + key, "expected a string");
    return v.get<std::string>();
}

int int_field(const json& j, const char* key, const std::string& path)
{
    const json& v = field(j, key, path);
    if (!v.is_number_integer()) throw ParseError(path + "/" + key, "expected an integer");
    return v.get<int>();
}

const json& array_field(const json& j, const char* key, const std::string& path)
{
    const json& v = field(j, key, path);
    if (!v.is_array()) throw ParseError(path + "/" + key, "expected an array");
    return v;
}

BBox parse_bbox(const json& j, const std::string& path)
{
    if (!j.is_array() || j.size() != 4) throw ParseError(path, "expected an array of 4 numbers");
    std::array<double, 4> a{};
    for (std::size_t i = 0; i < 4; ++i) {
        if (!j[i].is_number()) throw ParseError(path + "/" + std::to_string(i), "expected a number");
        a[i] = j[i].get<double>();
    }
    BBox b = BBox::from_array(a);
    if (!is_valid(b)) throw ParseError(path, "bbox must satisfy 0 <= min <= max <= 1");
    return b;
}

void check_schema_version(const json& doc, const std::string& path)
{
    const json& v = field(doc, "schema_version", path);
    if (!v.is_number_integer() || v.get<int>() != kSchemaVersion)
        throw ParseError(path + "/schema_version", "unsupported schema version (expected 1)");
}

} // namespace

ObjectNode parse_object_node(const json& j, const std::string& path, bool require_id)
{
    if (!j.is_object()) throw ParseError(path, "expected an object");
    ObjectNode n;
    if (require_id || j.contains("id")) n.id = string_field(j, "id", path);
    n.category = string_field(j, "category", path);
    if (j.contains("attributes")) {
        const json& attrs = j.at("attributes");
        if (!attrs.is_object()) throw ParseError(path + "/attributes", "expected an object");
        for (const auto& [k, v] : attrs.items()) {
            if (!v.is_string()) throw ParseError(path + "/attributes/" + k, "expected a string");
            n.attributes[k] = v.get<std::string>();
        }
    }
    if (require_id || j.contains("bbox")) n.bbox = parse_bbox(field(j, "bbox", path), path + "/bbox");
    return n;
}

json serialize(const ObjectNode& n)
{
    json attrs = json::object();
    for (const auto& [k, v] : n.attributes) attrs[k] = v;
    return {{"id", n.id}, {"category", n.category}, {"attributes", attrs}, {"bbox", n.bbox}};
}

RelationshipEdge parse_edge(const json& j, const std::string& path)
{
    return {string_field(j, "subject", path), string_field(j, "predicate", path), string_field(j, "object", path)};
}

json serialize(const RelationshipEdge& e)
{
    return {{"subject", e.subject_id}, {"predicate", e.predicate}, {"object", e.object_id}};
}

SceneGraph parse_scene_graph(const json& doc)
{
    check_schema_version(doc, "");
    SceneGraph g;
    g.image_ref = string_field(doc, "image", "");
    g.width = int_field(doc, "width", "");
    g.height = int_field(doc, "height", "");
    if (g.width <= 0) throw ParseError("/width", "must be positive");
    if (g.height <= 0) throw ParseError("/height", "must be positive");
    const json& objects = array_field(doc, "objects", "");
    for (std::size_t i = 0; i < objects.size(); ++i)
        g.nodes.push_back(parse_object_node(objects[i], "/objects/" + std::to_string(i)));
    const json& rels = array_field(doc, "relationships", "");
    for (std::size_t i = 0; i < rels.size(); ++i)
        g.edges.push_back(parse_edge(rels[i], "/relationships/" + std::to_string(i)));
    validate(g);
    return g;
}

SceneGraph parse_scene_graph(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_scene_graph(doc);
}

json serialize(const SceneGraph& g)
{
    json objects = json::array();
    for (const auto& n : g.nodes) objects.push_back(serialize(n));
    json rels = json::array();
    for (const auto& e : g.edges) rels.push_back(serialize(e));
    return {{"schema_version", kSchemaVersion}, {"image", g.image_ref}, {"width", g.width}, {"height", g.height},
            {"objects", objects}, {"relationships", rels}};
}

EditOp parse_edit_op(const json& doc, const std::string& path)
{
    if (!doc.is_object()) throw ParseError(path, "expected an object");
    if (doc.contains("schema_version")) check_schema_version(doc, path);
    EditOp op;
    try {
        op.kind = edit_kind_from_string(string_field(doc, "kind", path));
    } catch (const ParseError& e) {
        throw ParseError(path + "/kind", e.what());
    }
    if (doc.contains("target_id")) op.target_id = string_field(doc, "target_id", path);
    if (doc.contains("new_node") && !doc.at("new_node").is_null())
        op.new_node = parse_object_node(doc.at("new_node"), path + "/new_node", op.kind == EditKind::add);
    if (doc.contains("new_edges")) {
        const json& edges = array_field(doc, "new_edges", path);
        for (std::size_t i = 0; i < edges.size(); ++i)
            op.new_edges.push_back(parse_edge(edges[i], path + "/new_edges/" + std::to_string(i)));
    }
    if (doc.contains("edge_change") && !doc.at("edge_change").is_null()) {
        const json& ec = doc.at("edge_change");
        const std::string p = path + "/edge_change";
        op.edge_change = std::make_pair(parse_edge(field(ec, "old", p), p + "/old"),
                                        parse_edge(field(ec, "new", p), p + "/new"));
    }
    if (doc.contains("object_source") && !doc.at("object_source").is_null()) {
        const json& src = doc.at("object_source");
        const std::string p = path + "/object_source";
        op.object_source = ObjectSource{string_field(src, "image", p), parse_bbox(field(src, "bbox", p), p + "/bbox")};
    }
    try {
        validate(op);
    } catch (const ValidationError& e) {
        throw ParseError(path.empty() ? "/" : path, e.what());
    }
    return op;
}

json serialize(const EditOp& op)
{
    json j{{"schema_version", kSchemaVersion}, {"kind", to_string(op.kind)}};
    if (!op.target_id.empty()) j["target_id"] = op.target_id;
    if (op.new_node) j["new_node"] = serialize(*op.new_node);
    if (!op.new_edges.empty()) {
        json edges = json::array();
        for (const auto& e : op.new_edges) edges.push_back(serialize(e));
        j["new_edges"] = edges;
    }
    if (op.edge_change) j["edge_change"] = {{"old", serialize(op.edge_change->first)}, {"new", serialize(op.edge_change->second)}};
    if (op.object_source) j["object_source"] = {{"image", op.object_source->image}, {"bbox", op.object_source->bbox}};
    return j;
}

std::vector<EditOp> parse_edit_ops(const json& doc)
{
    const json* list = &doc;
    std::string base;
    if (doc.is_object() && doc.contains("ops")) {
        if (doc.contains("schema_version")) check_schema_version(doc, "");
        list = &doc.at("ops");
        base = "/ops";
    }
    if (list->is_object()) return {parse_edit_op(*list, base)};
    if (!list->is_array()) throw ParseError(base.empty() ? "/" : base, "expected an edit op or an array of ops");
    std::vector<EditOp> ops;
    for (std::size_t i = 0; i < list->size(); ++i)
        ops.push_back(parse_edit_op((*list)[i], base + "/" + std::to_string(i)));
    return ops;
}

json serialize(const std::vector<EditOp>& ops)
{
    json arr = json::array();
    for (const auto& op : ops) arr.push_back(serialize(op));
    return {{"schema_version", kSchemaVersion}, {"ops", arr}};
}

json serialize(const Triplet& t)
{
    return {{"subject_category", t.subject_category}, {"predicate", t.predicate},
            {"object_category", t.object_category}, {"target_is_subject", t.target_is_subject},
            {"reference_bbox", t.reference_bbox}};
}

Triplet parse_triplet(const json& j, const std::string& path)
{
    Triplet t;
    t.subject_category = string_field(j, "subject_category", path);
    t.predicate = string_field(j, "predicate", path);
    t.object_category = string_field(j, "object_category", path);
    const json& flag = field(j, "target_is_subject", path);
    if (!flag.is_boolean()) throw ParseError(path + "/target_is_subject", "expected a boolean");
    t.target_is_subject = flag.get<bool>();
    t.reference_bbox = parse_bbox(field(j, "reference_bbox", path), path + "/reference_bbox");
    return t;
}

} // namespace simbil
