#include "simbil/position.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "simbil/error.hpp"
#include "simbil/image.hpp"
#include "simbil/network.hpp"

namespace simbil {

using nlohmann::json;

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens)
{
    tokens_.push_back(kUnknown);
    index_[kUnknown] = 0;
    for (const auto& t : tokens) {
        if (index_.count(t)) continue;
        index_[t] = static_cast<int>(tokens_.size());
        tokens_.push_back(t);
    }
}

int Vocabulary::lookup(const std::string& token) const
{
    auto it = index_.find(token);
    return it == index_.end() ? 0 : it->second;
}

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// y += W x   (W is rows x cols, row-major)
void gemv(const double* w, int rows, int cols, const double* x, double* y)
{
    for (int r = 0; r < rows; ++r) {
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] += acc;
    }
}

// x_grad += W^T dy
void gemv_t(const double* w, int rows, int cols, const double* dy, double* dx)
{
    for (int r = 0; r < rows; ++r) {
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        const double d = dy[r];
        if (d == 0.0) continue;
        for (int c = 0; c < cols; ++c) dx[c] += d * wr[c];
    }
}

// G += scale * dy x^T
void outer_acc(double* g, int rows, int cols, const double* dy, const double* x, double scale)
{
    for (int r = 0; r < rows; ++r) {
        const double d = scale * dy[r];
        if (d == 0.0) continue;
        double* gr = g + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) gr[c] += d * x[c];
    }
}

} // namespace

struct PositionModel::Forward {
    int steps = 0;
    std::vector<std::vector<double>> x;
    std::vector<int> subject_idx, object_idx, predicate_idx;
    // gates and states per step; h[t+1], c[t+1] are the outputs of step t.
    std::vector<std::vector<double>> i, f, g, o, c, h, tanh_c;
    std::vector<std::vector<double>> pre, act; // head
    std::array<double, 4> y{};
};

int PositionModel::input_dim() const
{
    return (config_.use_category_embeddings ? 2 * config_.d_obj : 0) + config_.d_pred + 4 + 1;
}

void PositionModel::build_layout()
{
    layout_.clear();
    std::size_t off = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
        layout_.push_back({name, off, rows, cols});
        off += static_cast<std::size_t>(rows) * cols;
    };
    const int H = config_.d_h, D = input_dim();
    if (config_.use_category_embeddings) add("category_embedding", categories_.size(), config_.d_obj);
    add("predicate_embedding", predicates_.size(), config_.d_pred);
    add("lstm.w_x", 4 * H, D);
    add("lstm.w_h", 4 * H, H);
    add("lstm.bias", 1, 4 * H);
    int in = H;
    std::vector<int> widths = config_.hidden;
    widths.push_back(4);
    for (std::size_t k = 0; k < widths.size(); ++k) {
        add("head." + std::to_string(k) + ".weight", widths[k], in);
        add("head." + std::to_string(k) + ".bias", 1, widths[k]);
        in = widths[k];
    }
    theta_.assign(off, 0.0);
}

const ParamBlock& PositionModel::block(const std::string& name) const
{
    for (const auto& b : layout_)
        if (b.name == name) return b;
    throw NotFoundError("no parameter block '" + name + "'");
}

PositionModel PositionModel::create(const PositionConfig& config, const Vocabulary& categories,
                                    const Vocabulary& predicates, std::uint64_t seed)
{
    if (config.d_pred < 1 || config.d_h < 1 || (config.use_category_embeddings && config.d_obj < 1))
        throw ConfigError("position model dimensions must be positive");
    if (config.max_triplets < 1) throw ConfigError("max_triplets must be at least 1");
    for (int w : config.hidden)
        if (w < 1) throw ConfigError("hidden layer widths must be positive");
    PositionModel m;
    m.config_ = config;
    m.categories_ = categories;
    m.predicates_ = predicates;
    m.build_layout();

    nn::Rng rng(seed);
    const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(config.d_h));
    for (const auto& b : m.layout_) {
        double* p = m.theta_.data() + b.offset;
        if (b.name.ends_with("embedding")) {
            for (std::size_t k = 0; k < b.size(); ++k) p[k] = rng.uniform(-0.5, 0.5);
        } else if (b.name.starts_with("lstm.")) {
            for (std::size_t k = 0; k < b.size(); ++k) p[k] = rng.uniform(-lstm_bound, lstm_bound);
            if (b.name == "lstm.bias")
                for (int k = config.d_h; k < 2 * config.d_h; ++k) p[k] = 1.0; // forget gate
        } else {
            const bool is_bias = b.name.ends_with(".bias");
            const int fan_in = is_bias ? m.layout_[&b - m.layout_.data() - 1].cols : b.cols;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t k = 0; k < b.size(); ++k) p[k] = rng.uniform(-bound, bound);
        }
    }
    // Start the regression at the image centre.
    const auto& out_bias = m.block("head." + std::to_string(config.hidden.size()) + ".bias");
    for (int k = 0; k < 4; ++k) m.theta_[out_bias.offset + k] += 0.5;
    return m;
}

std::vector<double> PositionModel::encode_triplet(const Triplet& t, std::vector<std::string>* unknown) const
{
    std::vector<double> x;
    x.reserve(input_dim());
    auto note = [&](const Vocabulary& v, const std::string& tok) {
        const int idx = v.lookup(tok);
        if (idx == 0 && unknown) unknown->push_back(tok);
        return idx;
    };
    if (config_.use_category_embeddings) {
        const auto& e = block("category_embedding");
        for (const std::string* cat : {&t.subject_category, &t.object_category}) {
            const int idx = note(categories_, *cat);
            const double* row = theta_.data() + e.offset + static_cast<std::size_t>(idx) * e.cols;
            x.insert(x.end(), row, row + e.cols);
        }
    }
    const auto& pe = block("predicate_embedding");
    const int pidx = note(predicates_, t.predicate);
    const double* row = theta_.data() + pe.offset + static_cast<std::size_t>(pidx) * pe.cols;
    x.insert(x.end(), row, row + pe.cols);
    const auto b = t.reference_bbox.as_array();
    x.insert(x.end(), b.begin(), b.end());
    x.push_back(t.target_is_subject ? 1.0 : 0.0);
    return x;
}

PositionModel::Forward PositionModel::run(const std::vector<Triplet>& triplets) const
{
    if (triplets.empty()) throw ValidationError("position prediction needs at least one triplet");
    if (static_cast<int>(triplets.size()) > config_.max_triplets)
        throw ValidationError("too many triplets (" + std::to_string(triplets.size()) + " > " +
                              std::to_string(config_.max_triplets) + ")");
    const int H = config_.d_h, D = input_dim(), T = static_cast<int>(triplets.size());
    Forward fw;
    fw.steps = T;
    fw.h.assign(T + 1, std::vector<double>(H, 0.0));
    fw.c.assign(T + 1, std::vector<double>(H, 0.0));
    fw.i.resize(T);
    fw.f.resize(T);
    fw.g.resize(T);
    fw.o.resize(T);
    fw.tanh_c.resize(T);
    const double* wx = theta_.data() + block("lstm.w_x").offset;
    const double* wh = theta_.data() + block("lstm.w_h").offset;
    const double* bias = theta_.data() + block("lstm.bias").offset;

    for (int t = 0; t < T; ++t) {
        const Triplet& tr = triplets[t];
        fw.x.push_back(encode_triplet(tr));
        fw.subject_idx.push_back(categories_.lookup(tr.subject_category));
        fw.object_idx.push_back(categories_.lookup(tr.object_category));
        fw.predicate_idx.push_back(predicates_.lookup(tr.predicate));

        std::vector<double> z(bias, bias + 4 * H);
        gemv(wx, 4 * H, D, fw.x[t].data(), z.data());
        gemv(wh, 4 * H, H, fw.h[t].data(), z.data());
        auto& gi = fw.i[t];
        auto& gf = fw.f[t];
        auto& gg = fw.g[t];
        auto& go = fw.o[t];
        gi.resize(H);
        gf.resize(H);
        gg.resize(H);
        go.resize(H);
        fw.tanh_c[t].resize(H);
        for (int k = 0; k < H; ++k) {
            gi[k] = sigmoid(z[k]);
            gf[k] = sigmoid(z[H + k]);
            gg[k] = std::tanh(z[2 * H + k]);
            go[k] = sigmoid(z[3 * H + k]);
            fw.c[t + 1][k] = gf[k] * fw.c[t][k] + gi[k] * gg[k];
            fw.tanh_c[t][k] = std::tanh(fw.c[t + 1][k]);
            fw.h[t + 1][k] = go[k] * fw.tanh_c[t][k];
        }
    }

    std::vector<double> in = fw.h[T];
    const std::size_t layers = config_.hidden.size() + 1;
    for (std::size_t k = 0; k < layers; ++k) {
        const auto& w = block("head." + std::to_string(k) + ".weight");
        const auto& b = block("head." + std::to_string(k) + ".bias");
        std::vector<double> pre(theta_.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                theta_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()));
        gemv(theta_.data() + w.offset, w.rows, w.cols, in.data(), pre.data());
        std::vector<double> act = pre;
        if (k + 1 < layers)
            for (auto& v : act) v = std::max(v, 0.0);
        fw.pre.push_back(pre);
        fw.act.push_back(act);
        in = std::move(act);
    }
    std::copy(in.begin(), in.end(), fw.y.begin());
    return fw;
}

std::array<double, 4> PositionModel::raw_output(const std::vector<Triplet>& triplets) const
{
    return run(triplets).y;
}

BBox clamp_and_order(const std::array<double, 4>& raw)
{
    std::array<double, 4> v{};
    for (int k = 0; k < 4; ++k) v[k] = std::isfinite(raw[k]) ? std::clamp(raw[k], 0.0, 1.0) : 0.0;
    return {std::min(v[0], v[2]), std::min(v[1], v[3]), std::max(v[0], v[2]), std::max(v[1], v[3])};
}

BBox PositionModel::predict(const std::vector<Triplet>& triplets) const
{
    return clamp_and_order(raw_output(triplets));
}

double PositionModel::loss_and_grad(const TrainingExample& ex, std::vector<double>& grad, double scale) const
{
    const Forward fw = run(ex.triplets);
    const auto target = ex.target_bbox.as_array();
    double loss = 0.0;
    std::vector<double> dy(4);
    for (int k = 0; k < 4; ++k) {
        const double d = fw.y[k] - target[k];
        loss += d * d / 4.0;
        dy[k] = scale * 2.0 * d / 4.0;
    }
    if (grad.size() != theta_.size()) grad.assign(theta_.size(), 0.0);

    // Head, last layer first.
    const std::size_t layers = config_.hidden.size() + 1;
    std::vector<double> delta = dy;
    for (std::size_t kk = layers; kk-- > 0;) {
        const auto& w = block("head." + std::to_string(kk) + ".weight");
        const auto& b = block("head." + std::to_string(kk) + ".bias");
        if (kk + 1 < layers)
            for (std::size_t j = 0; j < delta.size(); ++j)
                if (fw.pre[kk][j] <= 0.0) delta[j] = 0.0;
        const std::vector<double>& in = kk == 0 ? fw.h[fw.steps] : fw.act[kk - 1];
        outer_acc(grad.data() + w.offset, w.rows, w.cols, delta.data(), in.data(), 1.0);
        for (int j = 0; j < b.cols; ++j) grad[b.offset + j] += delta[j];
        std::vector<double> prev(w.cols, 0.0);
        gemv_t(theta_.data() + w.offset, w.rows, w.cols, delta.data(), prev.data());
        delta = std::move(prev);
    }

    // Backprop through time.
    const int H = config_.d_h, D = input_dim();
    const auto& bx = block("lstm.w_x");
    const auto& bh = block("lstm.w_h");
    const auto& bb = block("lstm.bias");
    const double* wx = theta_.data() + bx.offset;
    const double* wh = theta_.data() + bh.offset;
    std::vector<double> dh = delta, dc(H, 0.0), dz(4 * H), dx(D);
    for (int t = fw.steps - 1; t >= 0; --t) {
        for (int k = 0; k < H; ++k) {
            const double tc = fw.tanh_c[t][k];
            const double i = fw.i[t][k], f = fw.f[t][k], g = fw.g[t][k], o = fw.o[t][k];
            const double d_o = dh[k] * tc;
            const double d_c = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = d_c * g * i * (1.0 - i);
            dz[H + k] = d_c * fw.c[t][k] * f * (1.0 - f);
            dz[2 * H + k] = d_c * i * (1.0 - g * g);
            dz[3 * H + k] = d_o * o * (1.0 - o);
            dc[k] = d_c * f;
        }
        outer_acc(grad.data() + bx.offset, 4 * H, D, dz.data(), fw.x[t].data(), 1.0);
        outer_acc(grad.data() + bh.offset, 4 * H, H, dz.data(), fw.h[t].data(), 1.0);
        for (int k = 0; k < 4 * H; ++k) grad[bb.offset + k] += dz[k];

        std::fill(dx.begin(), dx.end(), 0.0);
        gemv_t(wx, 4 * H, D, dz.data(), dx.data());
        int pos = 0;
        if (config_.use_category_embeddings) {
            const auto& ce = block("category_embedding");
            for (int idx : {fw.subject_idx[t], fw.object_idx[t]}) {
                double* row = grad.data() + ce.offset + static_cast<std::size_t>(idx) * ce.cols;
                for (int k = 0; k < ce.cols; ++k) row[k] += dx[pos + k];
                pos += ce.cols;
            }
        }
        const auto& pe = block("predicate_embedding");
        double* prow = grad.data() + pe.offset + static_cast<std::size_t>(fw.predicate_idx[t]) * pe.cols;
        for (int k = 0; k < pe.cols; ++k) prow[k] += dx[pos + k];

        std::fill(dh.begin(), dh.end(), 0.0);
        gemv_t(wh, 4 * H, H, dz.data(), dh.data());
    }
    return loss;
}

json PositionModel::to_json() const
{
    json tensors = json::object();
    for (const auto& b : layout_)
        tensors[b.name] = {{"shape", {b.rows, b.cols}},
                           {"data", std::vector<double>(theta_.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                        theta_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()))}};
    std::vector<std::string> cats(categories_.tokens().begin() + 1, categories_.tokens().end());
    std::vector<std::string> preds(predicates_.tokens().begin() + 1, predicates_.tokens().end());
    return {{"format", "simbil.position_model"},
            {"version", 1},
            {"config",
             {{"use_category_embeddings", config_.use_category_embeddings},
              {"d_obj", config_.d_obj},
              {"d_pred", config_.d_pred},
              {"d_h", config_.d_h},
              {"hidden", config_.hidden},
              {"max_triplets", config_.max_triplets}}},
            {"categories", cats},
            {"predicates", preds},
            {"tensors", tensors}};
}

PositionModel PositionModel::from_json(const json& doc)
{
    try {
        if (doc.at("format") != "simbil.position_model") throw ParseError("/format", "not a position model checkpoint");
        if (doc.at("version") != 1) throw ParseError("/version", "unsupported checkpoint version");
        const json& c = doc.at("config");
        PositionModel m;
        m.config_.use_category_embeddings = c.at("use_category_embeddings").get<bool>();
        m.config_.d_obj = c.at("d_obj").get<int>();
        m.config_.d_pred = c.at("d_pred").get<int>();
        m.config_.d_h = c.at("d_h").get<int>();
        m.config_.hidden = c.at("hidden").get<std::vector<int>>();
        m.config_.max_triplets = c.at("max_triplets").get<int>();
        m.categories_ = Vocabulary(doc.at("categories").get<std::vector<std::string>>());
        m.predicates_ = Vocabulary(doc.at("predicates").get<std::vector<std::string>>());
        m.build_layout();
        const json& tensors = doc.at("tensors");
        for (const auto& b : m.layout_) {
            const json& t = tensors.at(b.name);
            if (t.at("shape") != json::array({b.rows, b.cols}))
                throw ParseError("/tensors/" + b.name + "/shape", "shape does not match the config");
            const auto data = t.at("data").get<std::vector<double>>();
            if (data.size() != b.size()) throw ParseError("/tensors/" + b.name + "/data", "wrong element count");
            std::copy(data.begin(), data.end(), m.theta_.begin() + static_cast<std::ptrdiff_t>(b.offset));
        }
        return m;
    } catch (const json::exception& e) {
        throw ParseError("", std::string("malformed checkpoint: ") + e.what());
    }
}

void PositionModel::save(const std::filesystem::path& path) const
{
    write_text(path, to_json().dump());
}

PositionModel PositionModel::load(const std::filesystem::path& path)
{
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ParseError("", path.string() + ": " + e.what());
    }
    return from_json(doc);
}

BuildDatasetResult build_dataset(const std::vector<GraphPair>& pairs, int max_triplets)
{
    BuildDatasetResult out;
    for (const auto& p : pairs) {
        const ObjectNode* target = p.modified.find(p.target_id);
        if (!target) target = p.original.find(p.target_id);
        if (!target) throw NotFoundError("target '" + p.target_id + "' missing from both graphs");
        if (p.modified.incident_edges(p.target_id).empty() || !p.modified.find(p.target_id)) {
            ++out.skipped;
            continue;
        }
        out.examples.push_back(
            {extract_modified_triplets(p.original, p.modified, p.target_id, max_triplets), target->bbox});
    }
    return out;
}

std::pair<Vocabulary, Vocabulary> build_vocabularies(const std::vector<TrainingExample>& data)
{
    std::set<std::string> cats, preds;
    for (const auto& ex : data)
        for (const auto& t : ex.triplets) {
            cats.insert(t.subject_category);
            cats.insert(t.object_category);
            preds.insert(t.predicate);
        }
    return {Vocabulary({cats.begin(), cats.end()}), Vocabulary({preds.begin(), preds.end()})};
}

TrainResult train(const PositionModel& model, const std::vector<TrainingExample>& data, const TrainOptions& opts)
{
    if (data.empty()) throw ValidationError("training dataset is empty");
    if (opts.epochs < 0 || opts.batch < 1) throw ConfigError("epochs must be >= 0 and batch >= 1");
    TrainResult result{model, {}};
    PositionModel& m = result.model;
    const std::size_t n_params = m.parameters().size();
    nn::Param theta(n_params);
    theta.value = m.parameters();
    nn::Adam adam(opts.learning_rate);

    // Fixed chunking keeps the gradient summation order independent of the
    // thread count.
    constexpr int kChunks = 8;
    std::vector<std::vector<double>> grads(kChunks, std::vector<double>(n_params));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(opts.seed);

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch) {
            const std::size_t stop = std::min(order.size(), start + opts.batch);
            const double scale = 1.0 / static_cast<double>(stop - start);
            std::array<double, kChunks> losses{};
            m.parameters() = theta.value;
#pragma omp parallel for schedule(static)
            for (int k = 0; k < kChunks; ++k) {
                std::fill(grads[k].begin(), grads[k].end(), 0.0);
                for (std::size_t idx = start + k; idx < stop; idx += kChunks)
                    losses[k] += m.loss_and_grad(data[order[idx]], grads[k], scale);
            }
            std::fill(theta.grad.begin(), theta.grad.end(), 0.0);
            double batch_loss = 0.0;
            for (int k = 0; k < kChunks; ++k) {
                batch_loss += losses[k];
                for (std::size_t p = 0; p < n_params; ++p) theta.grad[p] += grads[k][p];
            }
            batch_loss *= scale;
            if (!std::isfinite(batch_loss))
                throw RuntimeError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batches));
            adam.step({&theta});
            epoch_loss += batch_loss;
            ++batches;
        }
        result.loss_curve.push_back(epoch_loss / batches);
    }
    m.parameters() = theta.value;
    return result;
}

PositionEval evaluate(const PositionModel& model, const std::vector<TrainingExample>& data, int resolution)
{
    if (data.empty()) throw ValidationError("evaluation dataset is empty");
    PositionEval e;
    for (const auto& ex : data) {
        const auto pred = model.predict(ex.triplets).as_array();
        const auto truth = ex.target_bbox.as_array();
        for (int k = 0; k < 4; ++k) e.per_corner[k] += std::abs(pred[k] - truth[k]) * resolution;
    }
    for (auto& v : e.per_corner) v /= static_cast<double>(data.size());
    e.mae_pixels = std::accumulate(e.per_corner.begin(), e.per_corner.end(), 0.0) / 4.0;
    double var = 0.0;
    for (double v : e.per_corner) var += (v - e.mae_pixels) * (v - e.mae_pixels);
    e.std_pixels = std::sqrt(var / 4.0);
    return e;
}

std::optional<bool> relation_satisfied(const Triplet& t, const BBox& predicted)
{
    // Centres of the relation's subject and object.
    const BBox& ref = t.reference_bbox;
    const BBox& subj = t.target_is_subject ? predicted : ref;
    const BBox& obj = t.target_is_subject ? ref : predicted;
    if (t.predicate == "left of") return subj.center_x() < obj.center_x();
    if (t.predicate == "right of") return subj.center_x() > obj.center_x();
    if (t.predicate == "front of" || t.predicate == "in front of" || t.predicate == "below")
        return subj.center_y() > obj.center_y();
    if (t.predicate == "behind" || t.predicate == "above") return subj.center_y() < obj.center_y();
    return std::nullopt;
}

double relation_satisfaction(const PositionModel& model, const std::vector<TrainingExample>& data)
{
    if (data.empty()) throw ValidationError("evaluation dataset is empty");
    int ok = 0;
    for (const auto& ex : data) {
        const BBox pred = model.predict(ex.triplets);
        bool all = true;
        for (const auto& t : ex.triplets) {
            const auto s = relation_satisfied(t, pred);
            if (s && !*s) all = false;
        }
        ok += all;
    }
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

json serialize(const TrainingExample& ex)
{
    json trips = json::array();
    for (const auto& t : ex.triplets) trips.push_back(serialize(t));
    return {{"triplets", trips}, {"target_bbox", ex.target_bbox}};
}

TrainingExample parse_training_example(const json& j, const std::string& path)
{
    if (!j.is_object() || !j.contains("triplets") || !j["triplets"].is_array())
        throw ParseError(path + "/triplets", "expected an array");
    TrainingExample ex;
    for (std::size_t i = 0; i < j["triplets"].size(); ++i)
        ex.triplets.push_back(parse_triplet(j["triplets"][i], path + "/triplets/" + std::to_string(i)));
    if (ex.triplets.empty()) throw ParseError(path + "/triplets", "must be non-empty");
    if (!j.contains("target_bbox")) throw ParseError(path + "/target_bbox", "missing required field");
    try {
        ex.target_bbox = j["target_bbox"].get<BBox>();
    } catch (const ParseError& e) {
        throw ParseError(path + "/target_bbox", e.what());
    }
    require_valid(ex.target_bbox, "target_bbox");
    return ex;
}

std::vector<TrainingExample> read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open dataset " + path.string());
    std::vector<TrainingExample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("line " + std::to_string(lineno), e.what());
        }
        out.push_back(parse_training_example(j, "line " + std::to_string(lineno)));
    }
    return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<TrainingExample>& data)
{
    std::ostringstream os;
    for (const auto& ex : data) os << serialize(ex).dump() << '\n';
    write_text(path, os.str());
}

} // namespace simbil
