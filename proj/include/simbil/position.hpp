#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "simbil/scenegraph.hpp"

namespace simbil {

struct PositionConfig {
    bool use_category_embeddings = true; // false drops subject/object embeddings
    int d_obj = 32;
    int d_pred = 16;
    int d_h = 128;
    std::vector<int> hidden{64, 64};
    int max_triplets = kDefaultMaxTriplets;

    bool operator==(const PositionConfig&) const = default;
};

// Token table; index 0 is the shared unknown token.
class Vocabulary {
public:
    static constexpr const char* kUnknown = "<unk>";

    Vocabulary();
    explicit Vocabulary(const std::vector<std::string>& tokens);

    int lookup(const std::string& token) const;
    bool contains(const std::string& token) const { return index_.count(token) != 0; }
    const std::vector<std::string>& tokens() const { return tokens_; }
    int size() const { return static_cast<int>(tokens_.size()); }

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

struct TrainingExample {
    std::vector<Triplet> triplets;
    BBox target_bbox;

    bool operator==(const TrainingExample&) const = default;
};

// Named block of the flat parameter vector (row-major rows x cols).
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }

    bool operator==(const ParamBlock&) const = default;
};

class PositionModel {
public:
    PositionModel() = default;
    static PositionModel create(const PositionConfig& config, const Vocabulary& categories,
                                const Vocabulary& predicates, std::uint64_t seed);

    const PositionConfig& config() const { return config_; }
    const Vocabulary& categories() const { return categories_; }
    const Vocabulary& predicates() const { return predicates_; }

    int input_dim() const;

    // concat{V_s, V_o, V_p, b_s, I}; CLEVR mode keeps {V_p, b_s, I}.
    // Tokens outside the vocabulary map to <unk> and are appended to `unknown`.
    std::vector<double> encode_triplet(const Triplet& t, std::vector<std::string>* unknown = nullptr) const;

    // Head output before clamping.
    std::array<double, 4> raw_output(const std::vector<Triplet>& triplets) const;

    // Clamped to [0, 1] and corner-ordered.
    BBox predict(const std::vector<Triplet>& triplets) const;

    // Squared error averaged over the 4 outputs; adds d(loss)/d(theta) * scale into grad.
    double loss_and_grad(const TrainingExample& ex, std::vector<double>& grad, double scale = 1.0) const;

    std::vector<double>& parameters() { return theta_; }
    const std::vector<double>& parameters() const { return theta_; }
    const std::vector<ParamBlock>& layout() const { return layout_; }
    const ParamBlock& block(const std::string& name) const;

    nlohmann::json to_json() const;
    static PositionModel from_json(const nlohmann::json& doc);
    void save(const std::filesystem::path& path) const;
    static PositionModel load(const std::filesystem::path& path);

    bool operator==(const PositionModel&) const = default;

private:
    struct Forward;
    void build_layout();
    Forward run(const std::vector<Triplet>& triplets) const;

    PositionConfig config_;
    Vocabulary categories_;
    Vocabulary predicates_;
    std::vector<ParamBlock> layout_;
    std::vector<double> theta_;
};

// Clamp each coordinate to [0, 1] and order corners.
BBox clamp_and_order(const std::array<double, 4>& raw);

struct BuildDatasetResult {
    std::vector<TrainingExample> examples;
    int skipped = 0;
};

struct GraphPair {
    SceneGraph original;
    SceneGraph modified;
    std::string target_id;
};

BuildDatasetResult build_dataset(const std::vector<GraphPair>& pairs, int max_triplets = kDefaultMaxTriplets);

// Vocabularies covering every category / predicate in the dataset.
std::pair<Vocabulary, Vocabulary> build_vocabularies(const std::vector<TrainingExample>& data);

struct TrainOptions {
    int epochs = 50;
    int batch = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct TrainResult {
    PositionModel model;
    std::vector<double> loss_curve; // mean batch loss per epoch
};

TrainResult train(const PositionModel& model, const std::vector<TrainingExample>& data, const TrainOptions& opts);

struct PositionEval {
    double mae_pixels = 0.0;
    double std_pixels = 0.0; // spread of the four per-corner MAEs
    std::array<double, 4> per_corner{};
};

PositionEval evaluate(const PositionModel& model, const std::vector<TrainingExample>& data, int resolution);

// Whether the predicted box sits on the side of the reference the predicate
// demands. Empty for predicates without a geometric reading.
std::optional<bool> relation_satisfied(const Triplet& t, const BBox& predicted);

// Fraction of examples whose prediction satisfies every geometric triplet.
double relation_satisfaction(const PositionModel& model, const std::vector<TrainingExample>& data);

nlohmann::json serialize(const TrainingExample& ex);
TrainingExample parse_training_example(const nlohmann::json& j, const std::string& path = "");
std::vector<TrainingExample> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<TrainingExample>& data);

} // namespace simbil
