#include "simbil/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "simbil/error.hpp"

namespace simbil {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(StepKind k)
{
    switch (k) {
    case StepKind::segment: return "segment";
    case StepKind::remove_inpaint: return "remove_inpaint";
    case StepKind::predict_position: return "predict_position";
    case StepKind::paste: return "paste";
    case StepKind::final_inpaint: return "final_inpaint";
    case StepKind::measure: return "measure";
    }
    return "unknown";
}

PipelinePlan plan(const SceneGraph& graph, const std::vector<EditOp>& ops)
{
    PipelinePlan p;
    p.ops = ops;
    std::set<std::string> touched;
    SceneGraph g = graph;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const EditOp& op = ops[i];
        const std::string& node = op.subject_node();
        if (!touched.insert(node).second)
            throw ConflictError("ops " + std::to_string(i) + " and an earlier op both edit node '" + node + "'");
        g = apply_edit(g, op);
        const int idx = static_cast<int>(i);
        auto push = [&](std::initializer_list<StepKind> kinds) {
            for (StepKind k : kinds) p.steps.push_back({k, idx});
        };
        switch (op.kind) {
        case EditKind::remove: push({StepKind::segment, StepKind::remove_inpaint}); break;
        case EditKind::replace:
            push({StepKind::segment, StepKind::remove_inpaint, StepKind::paste, StepKind::final_inpaint});
            break;
        case EditKind::relationship_change:
            push({StepKind::segment, StepKind::remove_inpaint, StepKind::predict_position, StepKind::paste,
                  StepKind::final_inpaint});
            break;
        case EditKind::add: push({StepKind::predict_position, StepKind::paste, StepKind::final_inpaint}); break;
        }
    }
    p.steps.push_back({StepKind::measure, -1});
    return p;
}

json serialize(const PipelinePlan& p)
{
    json steps = json::array();
    for (const auto& s : p.steps) steps.push_back({{"kind", to_string(s.kind)}, {"op", s.op_index}});
    return {{"ops", serialize(p.ops)}, {"steps", steps}};
}

PasteResult paste_object(const Image& canvas, const Image& crop, const Mask& crop_mask, const BBox& target_bbox,
                         int erosion_radius)
{
    require_valid(target_bbox, "target bbox");
    if (erosion_radius < 0) throw ValidationError("erosion radius must be non-negative");
    if (crop.width() <= 0 || crop.height() <= 0) throw ValidationError("crop is empty");
    if (crop_mask.width() != crop.width() || crop_mask.height() != crop.height())
        throw ValidationError("crop mask does not match crop size");
    if (crop.channels() != canvas.channels()) throw ValidationError("crop and canvas channel counts differ");
    const PixelRect rect = rasterize(target_bbox, canvas.width(), canvas.height());
    if (rect.empty()) throw ValidationError("target bbox covers no pixels after rasterization");

    const int rw = rect.width(), rh = rect.height(), r = erosion_radius;
    const Image resized = resize_bilinear(crop, rw, rh);
    // A known border lets the erosion eat into foreground touching the crop edge.
    Mask m(rw + 2 * r, rh + 2 * r, 1);
    for (int y = 0; y < rh; ++y) {
        const int sy = std::min(crop.height() - 1, static_cast<int>((y + 0.5) * crop.height() / rh));
        for (int x = 0; x < rw; ++x) {
            const int sx = std::min(crop.width() - 1, static_cast<int>((x + 0.5) * crop.width() / rw));
            m.at(y + r, x + r) = crop_mask.at(sy, sx);
        }
    }
    const Mask eroded = erode_foreground(m, r);

    PasteResult out{canvas, Mask(canvas.width(), canvas.height(), 1), rect, true};
    for (int y = 0; y < rh; ++y)
        for (int x = 0; x < rw; ++x) {
            if (!eroded.hole(y + r, x + r)) continue;
            out.vanished = false;
            out.pasted.at(rect.y0 + y, rect.x0 + x) = 0;
            for (int c = 0; c < canvas.channels(); ++c)
                out.image.at(c, rect.y0 + y, rect.x0 + x) = std::round(resized.at(c, y, x) * 255.0) / 255.0;
        }
    return out;
}

CropSource crop_from_image(const Image& image, const BBox& bbox, const Mask& object_mask)
{
    require_valid(bbox, "crop bbox");
    const PixelRect rect = rasterize(bbox, image.width(), image.height());
    if (rect.empty()) throw ValidationError("crop bbox covers no pixels");
    if (object_mask.width() != image.width() || object_mask.height() != image.height())
        throw ValidationError("object mask does not match image size");
    CropSource s{crop(image, rect), Mask(rect.width(), rect.height(), 1), ""};
    for (int y = 0; y < rect.height(); ++y)
        for (int x = 0; x < rect.width(); ++x) s.mask.at(y, x) = object_mask.at(rect.y0 + y, rect.x0 + x);
    return s;
}

namespace {

fs::path resolve(const fs::path& p, const fs::path& root)
{
    if (p.is_absolute() || root.empty()) return p;
    return root / p;
}

// Segmentation mask for a box, or the whole box when nothing is found.
std::pair<Mask, std::string> instance_or_box(const Image& image, const std::string& category, const BBox& bbox,
                                             SegmentationBackend& backend, double* score = nullptr)
{
    try {
        InstanceCandidate c = segment(image, category, bbox, backend);
        if (score) *score = c.score;
        return {std::move(c.mask), "segmented"};
    } catch (const InstanceNotFound&) {
        if (score) *score = 0.0;
        return {mask_from_bbox(bbox, image.width(), image.height()), "bbox fallback"};
    }
}

int attribute_matches(const ObjectNode& want, const ObjectNode& have)
{
    int n = 0;
    for (const auto& [k, v] : want.attributes) {
        auto it = have.attributes.find(k);
        n += it != have.attributes.end() && it->second == v;
    }
    return n;
}

} // namespace

CropSource object_crop_source(const EditOp& op, const fs::path& library, const fs::path& asset_root,
                              SegmentationBackend& backend)
{
    if (op.kind != EditKind::add && op.kind != EditKind::replace)
        throw ValidationError("object crops are only sourced for add and replace");
    const ObjectNode& want = *op.new_node;

    if (op.object_source) {
        const fs::path path = resolve(op.object_source->image, asset_root);
        const Image src = read_png(path);
        auto [mask, how] = instance_or_box(src, want.category, op.object_source->bbox, backend);
        CropSource s = crop_from_image(src, op.object_source->bbox, mask);
        s.origin = path.string() + " (" + how + ")";
        return s;
    }

    struct Entry {
        fs::path graph_file;
        SceneGraph graph;
    };
    std::vector<Entry> entries;
    std::set<std::string> categories;
    if (!library.empty() && fs::is_directory(library)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(library))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                SceneGraph g = parse_scene_graph(read_text(f));
                for (const auto& n : g.nodes) categories.insert(n.category);
                entries.push_back({f, std::move(g)});
            } catch (const Error&) {
                // Not a scene graph (ops files and the like live next to them).
            } catch (const nlohmann::json::exception&) {
            }
        }
    }

    // Prefer nodes sharing more attributes, then the highest segmentation
    // score, then file and id order.
    int best_attr = -1;
    for (const auto& e : entries)
        for (const auto& n : e.graph.nodes)
            if (n.category == want.category) best_attr = std::max(best_attr, attribute_matches(want, n));
    if (best_attr < 0) {
        std::string list;
        for (const auto& c : categories) list += (list.empty() ? "" : ", ") + c;
        throw NotFoundError("no source for category '" + want.category + "'; library categories: [" + list + "]");
    }

    std::optional<CropSource> best;
    double best_score = -1.0;
    for (const auto& e : entries)
        for (const auto& n : e.graph.nodes) {
            if (n.category != want.category || attribute_matches(want, n) != best_attr) continue;
            const fs::path img_path = resolve(e.graph.image_ref, e.graph_file.parent_path());
            const Image src = read_png(img_path);
            double score = 0.0;
            try {
                const InstanceCandidate c = segment(src, n.category, n.bbox, backend);
                score = c.score;
                if (score > best_score) {
                    best_score = score;
                    best = crop_from_image(src, n.bbox, c.mask);
                    best->origin = img_path.string() + "#" + n.id;
                }
            } catch (const InstanceNotFound&) {
            }
        }
    if (!best) throw NotFoundError("library holds '" + want.category + "' nodes but none could be segmented");
    return *best;
}

json serialize(const PipelineConfig& c)
{
    return {{"inpaint", serialize(c.inpaint)},     {"erosion_radius", c.erosion_radius},
            {"segmentation", c.segmentation},      {"segmentation_url", c.segmentation_url},
            {"position_model", c.position_model},  {"library", c.library},
            {"asset_root", c.asset_root},          {"max_triplets", c.max_triplets}};
}

PipelineConfig parse_pipeline_config(const json& j, PipelineConfig base)
{
    if (!j.is_object()) throw ParseError("", "pipeline config must be an object");
    static const std::set<std::string> known{"inpaint",        "erosion_radius", "segmentation", "segmentation_url",
                                             "position_model", "library",        "asset_root",   "max_triplets"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ParseError("/" + k, "unknown config key");
    try {
        if (j.contains("inpaint")) base.inpaint = parse_inpaint_spec(j["inpaint"], base.inpaint);
        if (j.contains("erosion_radius")) base.erosion_radius = j["erosion_radius"].get<int>();
        if (j.contains("segmentation")) base.segmentation = j["segmentation"].get<std::string>();
        if (j.contains("segmentation_url")) base.segmentation_url = j["segmentation_url"].get<std::string>();
        if (j.contains("position_model")) base.position_model = j["position_model"].get<std::string>();
        if (j.contains("library")) base.library = j["library"].get<std::string>();
        if (j.contains("asset_root")) base.asset_root = j["asset_root"].get<std::string>();
        if (j.contains("max_triplets")) base.max_triplets = j["max_triplets"].get<int>();
    } catch (const nlohmann::json::type_error& e) {
        throw ParseError("", std::string("wrong value type: ") + e.what());
    }
    if (base.erosion_radius < 0) throw ParseError("/erosion_radius", "must be non-negative");
    if (base.max_triplets < 1) throw ParseError("/max_triplets", "must be at least 1");
    if (base.segmentation != "synthetic" && base.segmentation != "http")
        throw ParseError("/segmentation", "expected 'synthetic' or 'http'");
    validate(base.inpaint);
    return base;
}

BBox place_by_rules(const BBox& start, const std::vector<Triplet>& triplets)
{
    double cx = start.center_x(), cy = start.center_y();
    const double hw = start.width() / 2, hh = start.height() / 2;
    bool moved = false;
    for (const auto& t : triplets) {
        const BBox cur{cx - hw, cy - hh, cx + hw, cy + hh};
        const auto ok = relation_satisfied(t, cur);
        if (!ok || *ok) continue;
        const BBox& ref = t.reference_bbox;
        moved = true;
        const bool horizontal = t.predicate == "left of" || t.predicate == "right of";
        // Sign of (target - reference) along the axis that makes the triplet hold.
        const bool subject_smaller =
            t.predicate == "left of" || t.predicate == "behind" || t.predicate == "above";
        const double sign = (subject_smaller == t.target_is_subject) ? -1.0 : 1.0;
        if (horizontal) {
            const double gap = std::max(std::abs(cx - ref.center_x()), hw + ref.width() / 2);
            cx = ref.center_x() + sign * gap;
        } else {
            const double gap = std::max(std::abs(cy - ref.center_y()), hh + ref.height() / 2);
            cy = ref.center_y() + sign * gap;
        }
    }
    if (!moved && start.x_min >= 0.0 && start.y_min >= 0.0 && start.x_max <= 1.0 && start.y_max <= 1.0) return start;
    cx = std::clamp(cx, hw, 1.0 - hw);
    cy = std::clamp(cy, hh, 1.0 - hh);
    return clip_unit({cx - hw, cy - hh, cx + hw, cy + hh});
}

namespace {

// Everything a step hands to the next one; persisted after each step.
struct WorkState {
    Image image;
    SceneGraph graph;
    Mask touched;
    Mask pending;     // hole still to be filled by final_inpaint
    Mask object_mask; // segmented object of the current op (0 = object)
    std::optional<CropSource> crop;
    std::optional<BBox> target;
    std::optional<BBox> roi;
    std::vector<std::string> log;
};

void save_state(const fs::path& dir, const WorkState& st)
{
    write_png(dir / "state_image.png", st.image);
    write_mask_png(dir / "state_touched.png", st.touched);
    write_mask_png(dir / "state_pending.png", st.pending);
    json j{{"graph", serialize(st.graph)}, {"log", st.log}};
    if (st.object_mask.size()) write_mask_png(dir / "state_object_mask.png", st.object_mask);
    j["has_object_mask"] = st.object_mask.size() != 0;
    if (st.crop) {
        write_png(dir / "state_crop.png", st.crop->crop);
        write_mask_png(dir / "state_crop_mask.png", st.crop->mask);
        j["crop_origin"] = st.crop->origin;
    }
    if (st.target) j["target"] = *st.target;
    if (st.roi) j["roi"] = *st.roi;
    write_text(dir / "state.json", j.dump(2) + "\n");
    write_text(dir / "complete", "");
}

WorkState load_state(const fs::path& dir)
{
    const json j = json::parse(read_text(dir / "state.json"));
    WorkState st;
    st.image = read_png(dir / "state_image.png");
    st.touched = read_mask_png(dir / "state_touched.png");
    st.pending = read_mask_png(dir / "state_pending.png");
    st.graph = parse_scene_graph(j["graph"]);
    st.log = j["log"].get<std::vector<std::string>>();
    if (j["has_object_mask"].get<bool>()) st.object_mask = read_mask_png(dir / "state_object_mask.png");
    if (j.contains("crop_origin"))
        st.crop = CropSource{read_png(dir / "state_crop.png"), read_mask_png(dir / "state_crop_mask.png"),
                             j["crop_origin"].get<std::string>()};
    if (j.contains("target")) st.target = j["target"].get<BBox>();
    if (j.contains("roi")) st.roi = j["roi"].get<BBox>();
    return st;
}

void grow_roi(WorkState& st, const BBox& b) { st.roi = st.roi ? enclosing(*st.roi, b) : b; }

std::string step_dir_name(int index, StepKind k)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d_", index + 1);
    return std::string(buf) + to_string(k);
}

int resolved_dilation(const InpaintSpec& spec, int w, int h)
{
    return spec.dilation_radius < 0 ? default_dilation_radius(w, h) : spec.dilation_radius;
}

json job_fingerprint(const PipelinePlan& plan, const SceneGraph& graph, const PipelineConfig& config)
{
    return {{"plan", serialize(plan)}, {"graph", serialize(graph)}, {"config", serialize(config)}};
}

} // namespace

ExecuteResult execute(const PipelinePlan& plan, const Image& image, const SceneGraph& graph,
                      const PipelineConfig& config, const ExecuteOptions& options)
{
    validate(graph);
    if (graph.width != image.width() || graph.height != image.height())
        throw ValidationError("graph size " + std::to_string(graph.width) + "x" + std::to_string(graph.height) +
                              " does not match image " + std::to_string(image.width()) + "x" +
                              std::to_string(image.height()));
    validate(config.inpaint);
    const int w = image.width(), h = image.height();
    const fs::path job = options.job_dir;
    const bool persist = !job.empty();

    std::unique_ptr<SegmentationBackend> owned_backend;
    SegmentationBackend* backend = options.backend;
    auto get_backend = [&]() -> SegmentationBackend& {
        if (!backend) {
            owned_backend = make_backend(config.segmentation, config.segmentation_url);
            backend = owned_backend.get();
        }
        return *backend;
    };
    std::optional<PositionModel> owned_model;
    const PositionModel* model = options.position_model;
    if (!model && !config.position_model.empty()) {
        owned_model = PositionModel::load(config.position_model);
        model = &*owned_model;
    }

    bool can_resume = false;
    if (persist) {
        const json fp = job_fingerprint(plan, graph, config);
        const fs::path fp_path = job / "fingerprint.json";
        if (fs::exists(fp_path)) {
            if (json::parse(read_text(fp_path)) != fp || !fs::exists(job / "input.png") ||
                read_png(job / "input.png") != quantize8(image))
                throw ConflictError("job directory " + job.string() + " holds a different job");
            can_resume = true;
        } else {
            fs::create_directories(job);
            write_png(job / "input.png", image);
            write_text(job / "config.json", serialize(config).dump(2) + "\n");
            write_text(job / "graph_before.json", serialize(graph).dump(2) + "\n");
            write_text(job / "ops.json", serialize(plan.ops).dump(2) + "\n");
            write_text(fp_path, fp.dump(2) + "\n");
        }
    }

    WorkState st;
    st.image = quantize8(image);
    st.graph = graph;
    st.touched = Mask(w, h, 1);
    st.pending = Mask(w, h, 1);

    ExecuteResult result;
    const int nsteps = static_cast<int>(plan.steps.size());
    auto write_log = [&] {
        if (!persist) return;
        std::string text;
        for (const auto& l : st.log) text += l + "\n";
        write_text(job / "log.txt", text);
    };

    for (int k = 0; k < nsteps; ++k) {
        const PlanStep& step = plan.steps[k];
        const std::string name = step_dir_name(k, step.kind);
        const fs::path dir = persist ? job / "steps" / name : fs::path{};
        StepRecord rec{k, step.kind, step.op_index, "steps/" + name, false};

        // measure is cheap and feeds the returned report, so it always runs.
        if (persist && can_resume && step.kind != StepKind::measure && fs::exists(dir / "complete")) {
            st = load_state(dir);
            rec.resumed = true;
            result.steps.push_back(rec);
            continue;
        }
        can_resume = false;
        if (persist) {
            fs::remove_all(dir);
            fs::create_directories(dir);
        }

        auto report_progress = [&](int it, int its, const LossTerms& loss) {
            if (options.progress) options.progress({k, nsteps, step.kind, it, its, loss});
        };
        auto run_inpaint = [&](const Mask& hole, int dilation) {
            InpaintSpec spec = config.inpaint;
            spec.dilation_radius = dilation;
            InpaintResult r = inpaint(st.image, hole, spec, [&](const InpaintProgress& p) {
                report_progress(p.iteration, p.iterations, p.loss);
            });
            if (persist) {
                write_mask_png(dir / "hole.png", r.hole);
                write_trace_csv(dir / "trace.csv", r.trace);
            }
            st.touched = hole_union(st.touched, r.hole);
            st.image = quantize8(r.image);
            return r;
        };

        try {
            report_progress(0, 0, {});
            const EditOp* op = step.op_index >= 0 ? &plan.ops[step.op_index] : nullptr;
            const std::string tag = "op " + std::to_string(step.op_index) + " " + to_string(step.kind) + ": ";
            switch (step.kind) {
            case StepKind::segment: {
                const ObjectNode* node = st.graph.find(op->target_id);
                if (!node) throw NotFoundError("node '" + op->target_id + "' not in graph");
                try {
                    InstanceCandidate c = segment(st.image, node->category, node->bbox, get_backend());
                    st.object_mask = std::move(c.mask);
                    st.log.push_back(tag + "segmented '" + node->id + "' with score " + std::to_string(c.score));
                    if (persist)
                        write_text(dir / "candidate.json",
                                   json{{"category", c.category}, {"score", c.score}, {"bbox", c.bbox},
                                        {"fallback", false}}
                                       .dump(2) +
                                       "\n");
                } catch (const InstanceNotFound& e) {
                    st.object_mask = mask_from_bbox(node->bbox, w, h);
                    st.log.push_back(tag + "no instance found (" + e.what() + "); using the bbox as mask");
                    if (persist)
                        write_text(dir / "candidate.json",
                                   json{{"bbox", node->bbox}, {"fallback", true}}.dump(2) + "\n");
                }
                grow_roi(st, node->bbox);
                if (op->kind == EditKind::relationship_change) {
                    st.crop = crop_from_image(st.image, node->bbox, st.object_mask);
                    st.crop->origin = "own pixels of '" + node->id + "'";
                }
                if (persist) write_mask_png(dir / "mask.png", st.object_mask);
                break;
            }
            case StepKind::remove_inpaint: {
                const int radius = resolved_dilation(config.inpaint, w, h);
                if (op->kind == EditKind::remove) {
                    run_inpaint(st.object_mask, radius);
                    st.graph = apply_edit(st.graph, *op);
                    if (persist) write_png(dir / "removed.png", st.image);
                    st.log.push_back(tag + "inpainted hole with dilation " + std::to_string(radius));
                } else {
                    // Filled after the paste so the new object is part of the context.
                    st.pending = dilate_hole(st.object_mask, radius);
                    if (persist) {
                        write_mask_png(dir / "hole.png", st.pending);
                        Image cut = st.image;
                        for (int c = 0; c < cut.channels(); ++c)
                            for (int y = 0; y < h; ++y)
                                for (int x = 0; x < w; ++x)
                                    if (st.pending.hole(y, x)) cut.at(c, y, x) = 0.0;
                        write_png(dir / "cut.png", cut);
                    }
                    st.log.push_back(tag + "cut object; hole deferred to final_inpaint");
                }
                st.object_mask = Mask();
                break;
            }
            case StepKind::predict_position: {
                const SceneGraph modified = apply_edit(st.graph, *op);
                const std::string& target = op->subject_node();
                std::vector<Triplet> triplets;
                try {
                    triplets = extract_modified_triplets(st.graph, modified, target, config.max_triplets);
                } catch (const Error&) {
                    if (model || op->kind != EditKind::add) throw;
                }
                std::string source;
                BBox box;
                if (model && !triplets.empty()) {
                    std::vector<std::string> unknown;
                    for (const auto& t : triplets) model->encode_triplet(t, &unknown);
                    for (const auto& u : unknown) st.log.push_back(tag + "token '" + u + "' not in vocabulary");
                    box = model->predict(triplets);
                    source = "model";
                } else if (op->kind == EditKind::add) {
                    box = op->new_node->bbox;
                    source = "user";
                    if (rasterize(box, w, h).empty())
                        throw ValidationError("added node has no usable bbox and no position model is configured");
                } else {
                    box = place_by_rules(st.graph.find(target)->bbox, triplets);
                    source = "rules";
                }
                st.target = box;
                json trips = json::array();
                for (const auto& t : triplets) trips.push_back(serialize(t));
                if (persist)
                    write_text(dir / "position.json",
                               json{{"bbox", box}, {"source", source}, {"triplets", trips}}.dump(2) + "\n");
                st.log.push_back(tag + "bbox from " + source);
                break;
            }
            case StepKind::paste: {
                BBox target;
                if (op->kind == EditKind::replace) {
                    target = st.graph.find(op->target_id)->bbox;
                } else {
                    target = *st.target;
                }
                if (!st.crop) {
                    st.crop = object_crop_source(*op, config.library, config.asset_root, get_backend());
                }
                const PasteResult pr =
                    paste_object(st.image, st.crop->crop, st.crop->mask, target, config.erosion_radius);
                if (pr.vanished)
                    st.log.push_back(tag + "warning: eroded foreground is empty; nothing pasted");
                st.image = pr.image;
                st.touched = hole_union(st.touched, pr.pasted);
                for (std::size_t i = 0; i < st.pending.size(); ++i)
                    if (pr.pasted.data()[i] == 0) st.pending.data()[i] = 1;
                SceneGraph next = apply_edit(st.graph, *op);
                next.find(op->subject_node())->bbox = target;
                st.graph = std::move(next);
                grow_roi(st, target);
                if (persist) {
                    write_png(dir / "pasted.png", st.image);
                    write_mask_png(dir / "paste_mask.png", pr.pasted);
                    write_text(dir / "paste.json",
                               json{{"target_bbox", target}, {"source", st.crop->origin}, {"vanished", pr.vanished}}
                                       .dump(2) +
                                   "\n");
                }
                st.log.push_back(tag + "pasted " + st.crop->origin);
                st.crop.reset();
                st.target.reset();
                break;
            }
            case StepKind::final_inpaint: {
                if (st.pending.all_known()) {
                    st.log.push_back(tag + "no hole left; skipped");
                } else {
                    run_inpaint(st.pending, 0);
                    st.log.push_back(tag + "inpainted remaining hole");
                }
                if (persist) write_png(dir / "final.png", st.image);
                st.pending = Mask(w, h, 1);
                break;
            }
            case StepKind::measure: {
                const BBox roi = st.roi.value_or(BBox{0, 0, 1, 1});
                result.metrics = report(quantize8(image), st.image, roi);
                if (persist) write_text(dir / "metrics.json", serialize(result.metrics).dump(2) + "\n");
                break;
            }
            }
        } catch (const Error& e) {
            st.log.push_back("step " + std::to_string(k + 1) + " " + to_string(step.kind) + " failed: " + e.what());
            write_log();
            throw StepError(k + 1, step.kind, e.what(), e.kind());
        } catch (const std::exception& e) {
            st.log.push_back("step " + std::to_string(k + 1) + " " + to_string(step.kind) + " failed: " + e.what());
            write_log();
            throw StepError(k + 1, step.kind, e.what(), Error::Kind::runtime);
        }
        if (persist) save_state(dir, st);
        result.steps.push_back(rec);
    }

    result.image = st.image;
    result.graph_after = st.graph;
    result.roi = st.roi.value_or(BBox{0, 0, 1, 1});
    result.touched = st.touched;
    result.log = st.log;
    if (persist) {
        write_png(job / "result.png", result.image);
        write_text(job / "graph_after.json", serialize(result.graph_after).dump(2) + "\n");
        write_text(job / "metrics.json", serialize(result.metrics).dump(2) + "\n");
        write_log();
    }
    return result;
}

} // namespace simbil
