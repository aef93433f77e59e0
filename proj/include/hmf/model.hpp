#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hmf/dataset.hpp"
#include "hmf/errors.hpp"
#include "hmf/geo.hpp"
#include "hmf/rng.hpp"
#include "hmf/tensor.hpp"

namespace hmf::model {

class LabelError : public DataError {
public:
    using DataError::DataError;
};
class DivergenceError : public DataError {
public:
    using DataError::DataError;
};

enum class BlockFamily { Plain, Residual, Dense };

const char* to_string(BlockFamily f);
BlockFamily family_from_string(const std::string& s);

struct StageSpec {
    int filters = 8; // channel width; growth rate for the Dense family
    int blocks = 1;
};

struct ModelSpec {
    int input_side = 64;
    BlockFamily family = BlockFamily::Plain;
    std::vector<StageSpec> stages = {{8, 1}, {16, 1}};
};

ModelSpec default_spec(BlockFamily family);
void validate_spec(const ModelSpec& spec);

// ---- layers -------------------------------------------------------------
//
// Layers bind flat views into network-owned parameter/gradient storage.
// forward(x, record=true) keeps whatever context backward() needs; backward
// consumes it and accumulates parameter gradients.

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string describe() const = 0;
    virtual std::size_t param_count() const { return 0; }
    virtual void bind(double* /*params*/, double* /*grads*/) {}
    virtual void init(Rng& /*rng*/) {}
    virtual std::array<int, 3> out_shape(std::array<int, 3> in) const = 0; // {h,w,c}
    virtual Tensor forward(const Tensor& x, bool record) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
};

class Conv2d : public Layer {
public:
    Conv2d(int in_c, int out_c, int kernel, int stride, int pad);
    std::string describe() const override;
    std::size_t param_count() const override;
    void bind(double* params, double* grads) override;
    void init(Rng& rng) override; // fan-in-scaled uniform weights, zero bias
    std::array<int, 3> out_shape(std::array<int, 3> in) const override;
    Tensor forward(const Tensor& x, bool record) override;
    Tensor backward(const Tensor& dy) override;

private:
    int in_c_, out_c_, k_, stride_, pad_;
    double* w_ = nullptr;  // [k][k][in_c][out_c]
    double* b_ = nullptr;  // [out_c]
    double* dw_ = nullptr;
    double* db_ = nullptr;
    Tensor x_;
};

class ReLU : public Layer {
public:
    std::string describe() const override { return "relu"; }
    std::array<int, 3> out_shape(std::array<int, 3> in) const override { return in; }
    Tensor forward(const Tensor& x, bool record) override;
    Tensor backward(const Tensor& dy) override;

private:
    Tensor x_;
};

class MaxPool2d : public Layer {
public:
    MaxPool2d(int kernel, int stride);
    std::string describe() const override;
    std::array<int, 3> out_shape(std::array<int, 3> in) const override;
    Tensor forward(const Tensor& x, bool record) override;
    Tensor backward(const Tensor& dy) override;

private:
    int k_, stride_;
    std::vector<std::size_t> argmax_;
    int in_n_ = 0, in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

class GlobalAvgPool : public Layer {
public:
    std::string describe() const override { return "gap"; }
    std::array<int, 3> out_shape(std::array<int, 3> in) const override { return {1, 1, in[2]}; }
    Tensor forward(const Tensor& x, bool record) override;
    Tensor backward(const Tensor& dy) override;

private:
    int in_h_ = 0, in_w_ = 0, in_c_ = 0, in_n_ = 0;
};

class Dense : public Layer {
public:
    Dense(int in_dim, int out_dim);
    std::string describe() const override;
    std::size_t param_count() const override;
    void bind(double* params, double* grads) override;
    void init(Rng& rng) override;
    std::array<int, 3> out_shape(std::array<int, 3> in) const override;
    Tensor forward(const Tensor& x, bool record) override;
    Tensor backward(const Tensor& dy) override;

private:
    int in_dim_, out_dim_;
    double* w_ = nullptr; // [in][out]
    double* b_ = nullptr;
    double* dw_ = nullptr;
    double* db_ = nullptr;
    Tensor x_;
};

// Pre-activation residual unit: y = x + conv(relu(conv(relu(x)))).
// With zeroed parameters the block is exactly the identity map.
class ResidualBlock : public Layer {
public:
    explicit ResidualBlock(int channels);
    std::string describe() const override;
    std::size_t param_count() const override;
    void bind(double* params, double* grads) override;
    void init(Rng& rng) override;
    std::array<int, 3> out_shape(std::array<int, 3> in) const override { return in; }
    Tensor forward(const Tensor& x, bool record) override;
    Tensor backward(const Tensor& dy) override;

private:
    int channels_;
    Conv2d conv1_, conv2_;
    Tensor x_, t_;
};

// Densely connected block: each sub-layer computes growth new channels from
// relu of everything so far and concatenates them onto the running state.
class DenseBlock : public Layer {
public:
    DenseBlock(int in_c, int growth, int layers);
    std::string describe() const override;
    std::size_t param_count() const override;
    void bind(double* params, double* grads) override;
    void init(Rng& rng) override;
    std::array<int, 3> out_shape(std::array<int, 3> in) const override;
    Tensor forward(const Tensor& x, bool record) override;
    Tensor backward(const Tensor& dy) override;

private:
    int in_c_, growth_, layers_;
    std::vector<Conv2d> convs_;
    std::vector<Tensor> states_;
};

// ---- network ------------------------------------------------------------

// Logits are clamped to +-30 before the sigmoid so scores stay strictly
// inside (0,1) at double precision.
inline constexpr double kLogitClamp = 30.0;

class Network {
public:
    explicit Network(const ModelSpec& spec);

    const ModelSpec& spec() const { return spec_; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& grads() { return grads_; }

    void init_params(std::uint64_t seed);

    // Sigmoid scores, one per sample, strictly in (0,1).
    std::vector<double> forward(const Tensor& batch, bool record = false);

    // Weighted binary cross-entropy; accumulates parameter gradients into
    // grads() (cleared first) and returns the mean loss.
    double forward_backward(const Tensor& batch, const std::vector<int>& labels,
                            double pos_weight);

private:
    void check_input(const Tensor& batch) const;

    ModelSpec spec_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<double> logits_;
};

// Mean weighted BCE and its gradient w.r.t. the logits; shared by the
// network and the gradient-check tests.
double weighted_bce(const std::vector<double>& logits, const std::vector<int>& labels,
                    double pos_weight, std::vector<double>* dlogits = nullptr);

// ---- training -----------------------------------------------------------

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 20;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double pos_weight = 0.0; // <= 0 means negatives/positives of the train split
    enum class Optimizer { SGD, Momentum } optimizer = Optimizer::Momentum;
    double momentum = 0.9;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double val_auc = 0.0;
};

struct TrainedModel {
    ModelSpec spec;
    std::vector<double> params; // parameters of the best-validation-AUC epoch
    std::vector<EpochStats> history;
};

// Mini-batch SGD with seeded init and shuffling; returns the parameters of
// the epoch with the best validation AUC (earliest on ties).
TrainedModel train(const std::vector<dataset::LabeledTile>& tiles,
                   const dataset::DatasetSplit& split, const ModelSpec& spec,
                   const TrainConfig& cfg);

// Area-average resample of a square RGB [0,1] image.
std::vector<double> resize_area(const std::vector<double>& src, int src_side, int dst_side);

// Tile -> network input sample (resized to input_side, centered to [-0.5,0.5]).
std::vector<double> tile_to_sample(const geo::ImageTile& tile, int input_side);

// Reusable inference wrapper around a checkpointed model.
class Scorer {
public:
    explicit Scorer(const TrainedModel& model);
    double score(const geo::ImageTile& tile);
    std::vector<double> score_batch(const std::vector<dataset::LabeledTile>& tiles);

private:
    ModelSpec spec_;
    Network net_;
};

double predict_score(const TrainedModel& model, const geo::ImageTile& tile);

// ---- checkpoints ----------------------------------------------------------
// Binary container: magic/version, JSON descriptor (spec + history), then the
// raw little-endian double parameter vector. Write->read is bit-exact.

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

} // namespace hmf::model
