// Command-line front end: one subcommand per pipeline stage plus the HTTP service.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "simbil/error.hpp"
#include "simbil/image.hpp"
#include "simbil/inpaint.hpp"
#include "simbil/mask.hpp"
#include "simbil/metrics.hpp"
#include "simbil/pipeline.hpp"
#include "simbil/position.hpp"
#include "simbil/service.hpp"
#include "simbil/synthetic.hpp"

using namespace simbil;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { ok = 0, usage = 2, validation = 3, runtime = 4 };

int exit_code(const Error& e)
{
    switch (e.kind()) {
    case Error::Kind::usage: return usage;
    case Error::Kind::validation:
    case Error::Kind::not_found:
    case Error::Kind::conflict: return validation;
    case Error::Kind::runtime: return runtime;
    }
    return runtime;
}

json read_json(const fs::path& p)
{
    try {
        return json::parse(read_text(p));
    } catch (const json::parse_error& e) {
        throw ParseError(p.string(), e.what());
    }
}

// Records where each effective config value came from.
class Provenance {
public:
    void mark(const json& doc, const std::string& source, const std::string& prefix = "")
    {
        for (const auto& [k, v] : doc.items()) {
            if (v.is_object()) {
                mark(v, source, prefix + k + ".");
            } else {
                sources_[prefix + k] = source;
            }
        }
    }
    void set(const std::string& key, const std::string& source) { sources_[key] = source; }

    void log(const json& effective, const std::string& prefix = "") const
    {
        for (const auto& [k, v] : effective.items()) {
            if (v.is_object()) {
                log(v, prefix + k + ".");
                continue;
            }
            auto it = sources_.find(prefix + k);
            std::cerr << "config " << prefix << k << " = " << v.dump() << " ("
                      << (it == sources_.end() ? "default" : it->second) << ")\n";
        }
    }

private:
    std::map<std::string, std::string> sources_;
};

std::vector<double> parse_roi(const std::string& s)
{
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("--roi expects four comma separated numbers");
        }
    }
    if (v.size() != 4) throw ConfigError("--roi expects four comma separated numbers");
    return v;
}

struct NetworkFlags {
    std::optional<int> depth, channels, skip;

    void add(CLI::App* app)
    {
        app->add_option("--depth", depth, "Generator levels");
        app->add_option("--channels", channels, "Feature channels per level");
        app->add_option("--skip-channels", skip, "Skip connection channels");
    }
    void apply(InpaintSpec& s, Provenance& p) const
    {
        if (depth) s.network.depth = *depth, p.set("inpaint.network.depth", "flag");
        if (channels) s.network.channels = *channels, p.set("inpaint.network.channels", "flag");
        if (skip) s.network.skip_channels = *skip, p.set("inpaint.network.skip_channels", "flag");
    }
};

volatile std::sig_atomic_t g_stop = 0;
HttpService* g_http = nullptr;

void on_signal(int)
{
    g_stop = 1;
    if (g_http) g_http->stop();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"simbil: scene-graph driven image editing with guided internal-learning inpainting"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "simbil 0.1.0");

    // edit
    auto* edit = app.add_subcommand("edit", "Run the full edit pipeline into a job directory");
    std::string e_image, e_graph, e_ops, e_out, e_config, e_model, e_library, e_seg, e_seg_url;
    std::optional<int> e_iters, e_dilate, e_erosion;
    std::optional<double> e_lambda;
    std::optional<std::uint64_t> e_seed;
    std::optional<std::string> e_mode;
    NetworkFlags e_net;
    edit->add_option("--image", e_image, "Input PNG")->required()->check(CLI::ExistingFile);
    edit->add_option("--graph", e_graph, "Scene graph JSON")->required()->check(CLI::ExistingFile);
    edit->add_option("--ops", e_ops, "Edit ops JSON (op, array or {\"ops\": [...]})")->required()->check(CLI::ExistingFile);
    edit->add_option("--out", e_out, "Job directory")->required();
    edit->add_option("--config", e_config, "Pipeline config JSON")->check(CLI::ExistingFile);
    edit->add_option("--seed", e_seed, "Noise and parameter seed");
    edit->add_option("--iters", e_iters, "Inpainting iterations");
    edit->add_option("--lambda", e_lambda, "Guide weight");
    edit->add_option("--dilate", e_dilate, "Hole dilation radius (negative: automatic)");
    edit->add_option("--mode", e_mode, "plain | guided | guided-rows");
    edit->add_option("--erosion", e_erosion, "Paste erosion radius");
    edit->add_option("--position-model", e_model, "Position model checkpoint");
    edit->add_option("--library", e_library, "Query image library directory");
    edit->add_option("--segmentation", e_seg, "synthetic | http");
    edit->add_option("--segmentation-url", e_seg_url, "Base URL of the segmentation service");
    e_net.add(edit);

    // inpaint
    auto* inp = app.add_subcommand("inpaint", "Inpaint the hole of a mask");
    std::string i_image, i_mask, i_out, i_trace, i_config;
    std::string i_mode = "guided";
    std::optional<int> i_iters, i_dilate;
    std::optional<double> i_lambda;
    std::optional<std::uint64_t> i_seed;
    NetworkFlags i_net;
    inp->add_option("--image", i_image, "Input PNG")->required()->check(CLI::ExistingFile);
    inp->add_option("--mask", i_mask, "Mask PNG (255 known, 0 hole)")->required()->check(CLI::ExistingFile);
    inp->add_option("--mode", i_mode, "plain | guided | guided-rows")
        ->check(CLI::IsMember({"plain", "guided", "guided-rows"}));
    inp->add_option("--iters", i_iters, "Iterations");
    inp->add_option("--lambda", i_lambda, "Guide weight");
    inp->add_option("--dilate", i_dilate, "Hole dilation radius (negative: automatic)");
    inp->add_option("--seed", i_seed, "Noise and parameter seed");
    inp->add_option("--out", i_out, "Output PNG")->required();
    inp->add_option("--trace", i_trace, "Loss trace CSV");
    inp->add_option("--config", i_config, "Inpaint spec JSON")->check(CLI::ExistingFile);
    i_net.add(inp);

    // train-position
    auto* tp = app.add_subcommand("train-position", "Train the position model");
    std::string t_dataset, t_out;
    int t_epochs = 50, t_batch = 64;
    double t_lr = 1e-3;
    std::uint64_t t_seed = 0;
    bool t_clevr = false;
    tp->add_option("--dataset", t_dataset, "Training examples (JSON lines)")->required()->check(CLI::ExistingFile);
    tp->add_option("--out", t_out, "Checkpoint path")->required();
    tp->add_option("--epochs", t_epochs, "Epochs")->capture_default_str();
    tp->add_option("--batch", t_batch, "Batch size")->capture_default_str();
    tp->add_option("--lr", t_lr, "Adam learning rate")->capture_default_str();
    tp->add_option("--seed", t_seed, "Initialisation and shuffling seed")->capture_default_str();
    tp->add_flag("--clevr-mode", t_clevr, "Drop subject/object category embeddings");

    // eval-position
    auto* ep = app.add_subcommand("eval-position", "Evaluate a position model");
    std::string v_model, v_dataset;
    int v_res = 256;
    ep->add_option("--model", v_model, "Checkpoint")->required()->check(CLI::ExistingFile);
    ep->add_option("--dataset", v_dataset, "Examples (JSON lines)")->required()->check(CLI::ExistingFile);
    ep->add_option("--resolution", v_res, "Pixels per unit for MAE")->capture_default_str();

    // metrics
    auto* me = app.add_subcommand("metrics", "MAE / SSIM between two images");
    std::string m_before, m_after, m_ref, m_roi, m_out;
    me->add_option("--before", m_before, "Original PNG")->required()->check(CLI::ExistingFile);
    me->add_option("--after", m_after, "Edited PNG")->required()->check(CLI::ExistingFile);
    me->add_option("--reference", m_ref, "Ground truth PNG")->check(CLI::ExistingFile);
    me->add_option("--roi", m_roi, "x0,y0,x1,y1 normalized");
    me->add_option("--out", m_out, "Write metrics.json here");

    // gen-synthetic
    auto* gs = app.add_subcommand("gen-synthetic", "Generate CLEVR-like scenes with graphs and ground truth");
    int g_scenes = 5, g_size = 64, g_pairs = 0;
    std::uint64_t g_seed = 0;
    std::string g_out;
    gs->add_option("--scenes", g_scenes, "Scene count")->capture_default_str();
    gs->add_option("--out", g_out, "Output directory")->required();
    gs->add_option("--seed", g_seed, "Seed")->capture_default_str();
    gs->add_option("--size", g_size, "Image side in pixels")->capture_default_str();
    gs->add_option("--position-examples", g_pairs, "Also write position_dataset.jsonl with this many examples");

    // serve
    auto* sv = app.add_subcommand("serve", "Run the HTTP job service");
    int s_port = 0, s_workers = 0;
    std::string s_data, s_host = "127.0.0.1", s_config;
    sv->add_option("--port", s_port, "Port (default SIMBIL_PORT or 8080)");
    sv->add_option("--data", s_data, "Store root (default SIMBIL_DATA or ./simbil-data)");
    sv->add_option("--host", s_host, "Bind address")->capture_default_str();
    sv->add_option("--workers", s_workers, "Concurrent jobs (default SIMBIL_WORKERS or 1)");
    sv->add_option("--config", s_config, "Default pipeline config JSON")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return usage;
    }

    auto mode_of = [](const std::string& m) {
        if (m == "plain") return GuideMode::none;
        if (m == "guided") return GuideMode::global;
        if (m == "guided-rows") return GuideMode::row_wise;
        throw ConfigError("unknown mode '" + m + "' (plain | guided | guided-rows)");
    };

    try {
        if (*edit) {
            Provenance prov;
            PipelineConfig cfg;
            if (!e_config.empty()) {
                const json doc = read_json(e_config);
                cfg = parse_pipeline_config(doc, cfg);
                prov.mark(doc, "file");
            }
            if (e_seed) {
                cfg.inpaint.noise_seed = cfg.inpaint.param_seed = *e_seed;
                prov.set("inpaint.noise_seed", "flag");
                prov.set("inpaint.param_seed", "flag");
            }
            if (e_iters) cfg.inpaint.iterations = *e_iters, prov.set("inpaint.iterations", "flag");
            if (e_lambda) cfg.inpaint.lambda = *e_lambda, prov.set("inpaint.lambda", "flag");
            if (e_dilate) cfg.inpaint.dilation_radius = *e_dilate, prov.set("inpaint.dilation_radius", "flag");
            if (e_mode) cfg.inpaint.guide_mode = mode_of(*e_mode), prov.set("inpaint.guide_mode", "flag");
            if (e_erosion) cfg.erosion_radius = *e_erosion, prov.set("erosion_radius", "flag");
            if (!e_model.empty()) cfg.position_model = e_model, prov.set("position_model", "flag");
            if (!e_library.empty()) cfg.library = e_library, prov.set("library", "flag");
            if (!e_seg.empty()) cfg.segmentation = e_seg, prov.set("segmentation", "flag");
            if (!e_seg_url.empty()) cfg.segmentation_url = e_seg_url, prov.set("segmentation_url", "flag");
            e_net.apply(cfg.inpaint, prov);
            cfg = parse_pipeline_config(serialize(cfg));
            prov.log(serialize(cfg));

            const Image image = read_png(e_image);
            const SceneGraph graph = parse_scene_graph(read_json(e_graph));
            const auto ops = parse_edit_ops(read_json(e_ops));
            const PipelinePlan p = plan(graph, ops);
            ExecuteOptions eo;
            eo.job_dir = e_out;
            int last_step = -1;
            eo.progress = [&](const PipelineProgress& pr) {
                if (pr.step != last_step) {
                    std::cerr << "step " << pr.step + 1 << "/" << pr.steps << " " << to_string(pr.kind) << "\n";
                    last_step = pr.step;
                }
                if (pr.iterations > 0 && (pr.iteration % 100 == 0 || pr.iteration == pr.iterations))
                    std::cerr << "  iteration " << pr.iteration << "/" << pr.iterations << " loss " << pr.loss.total
                              << "\n";
            };
            const ExecuteResult r = execute(p, image, graph, cfg, eo);
            for (const auto& l : r.log) std::cerr << l << "\n";
            std::cout << json{{"job_dir", e_out},
                              {"result", (fs::path(e_out) / "result.png").string()},
                              {"metrics", serialize(r.metrics)}}
                             .dump(2)
                      << "\n";
        } else if (*inp) {
            Provenance prov;
            InpaintSpec spec;
            if (!i_config.empty()) {
                const json doc = read_json(i_config);
                spec = parse_inpaint_spec(doc, spec);
                prov.mark(doc, "file", "inpaint.");
            }
            spec.guide_mode = mode_of(i_mode);
            prov.set("inpaint.guide_mode", "flag");
            if (i_iters) spec.iterations = *i_iters, prov.set("inpaint.iterations", "flag");
            if (i_lambda) spec.lambda = *i_lambda, prov.set("inpaint.lambda", "flag");
            if (i_dilate) spec.dilation_radius = *i_dilate, prov.set("inpaint.dilation_radius", "flag");
            if (i_seed) {
                spec.noise_seed = spec.param_seed = *i_seed;
                prov.set("inpaint.noise_seed", "flag");
                prov.set("inpaint.param_seed", "flag");
            }
            i_net.apply(spec, prov);
            validate(spec);
            prov.log(json{{"inpaint", serialize(spec)}});

            const Image image = read_png(i_image);
            const Mask mask = read_mask_png(i_mask);
            const InpaintResult r = inpaint(image, mask, spec, [](const InpaintProgress& p) {
                if (p.iteration % 100 == 0 || p.iteration == p.iterations)
                    std::cerr << "iteration " << p.iteration << "/" << p.iterations << " loss " << p.loss.total
                              << "\n";
            });
            write_png(i_out, r.image);
            if (!i_trace.empty()) write_trace_csv(i_trace, r.trace);
            std::cerr << "wrote " << i_out << " in " << r.elapsed.count() << " s\n";
        } else if (*tp) {
            const auto data = read_dataset(t_dataset);
            const auto [cats, preds] = build_vocabularies(data);
            PositionConfig pc;
            pc.use_category_embeddings = !t_clevr;
            const PositionModel init = PositionModel::create(pc, cats, preds, t_seed);
            TrainOptions to;
            to.epochs = t_epochs;
            to.batch = t_batch;
            to.learning_rate = t_lr;
            to.seed = t_seed;
            const TrainResult r = train(init, data, to);
            r.model.save(t_out);
            for (std::size_t e = 0; e < r.loss_curve.size(); ++e)
                std::cerr << "epoch " << e + 1 << " loss " << r.loss_curve[e] << "\n";
            std::cout << json{{"model", t_out}, {"examples", data.size()}, {"final_loss", r.loss_curve.back()}}.dump(2)
                      << "\n";
        } else if (*ep) {
            const PositionModel m = PositionModel::load(v_model);
            const auto data = read_dataset(v_dataset);
            const PositionEval e = evaluate(m, data, v_res);
            std::cout << json{{"mae", e.mae_pixels},
                              {"std", e.std_pixels},
                              {"per_corner", e.per_corner},
                              {"relation_satisfaction", relation_satisfaction(m, data)},
                              {"examples", data.size()},
                              {"resolution", v_res}}
                             .dump(2)
                      << "\n";
        } else if (*me) {
            const Image before = read_png(m_before);
            const Image after = read_png(m_after);
            std::optional<Image> ref;
            if (!m_ref.empty()) ref = read_png(m_ref);
            BBox roi{0, 0, 1, 1};
            if (!m_roi.empty()) {
                const auto v = parse_roi(m_roi);
                roi = {v[0], v[1], v[2], v[3]};
            }
            const json out = serialize(report(before, after, roi, ref));
            if (!m_out.empty()) write_text(m_out, out.dump(2) + "\n");
            std::cout << out.dump(2) << "\n";
        } else if (*gs) {
            synthetic::SceneOptions so;
            so.width = so.height = g_size;
            synthetic::write_scenes(g_out, g_scenes, g_seed, so);
            if (g_pairs > 0) {
                synthetic::PositionPairOptions po;
                po.count = g_pairs;
                po.seed = g_seed;
                const auto built = build_dataset(synthetic::generate_position_pairs(po));
                write_dataset(fs::path(g_out) / "position_dataset.jsonl", built.examples);
            }
            std::cerr << "wrote " << g_scenes << " scenes to " << g_out << "\n";
        } else if (*sv) {
            ServiceOptions so = options_from_env({});
            if (!s_data.empty()) so.data_dir = s_data;
            if (s_workers > 0) so.workers = s_workers;
            if (!s_config.empty()) so.defaults = parse_pipeline_config(read_json(s_config));
            int port = s_port;
            if (port == 0) {
                const char* env = std::getenv("SIMBIL_PORT");
                port = env && *env ? std::atoi(env) : 8080;
            }
            HttpService http(so);
            const int bound = http.bind(s_host, port);
            g_http = &http;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving on http://" << s_host << ":" << bound << " data=" << so.data_dir.string()
                      << " workers=" << so.workers << "\n";
            http.listen();
            g_http = nullptr;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return runtime;
    }
    return ok;
}
