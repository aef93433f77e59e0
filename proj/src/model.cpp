#include "hmf/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hmf/eval.hpp"

namespace hmf::model {

const char* to_string(BlockFamily f) {
    switch (f) {
    case BlockFamily::Plain: return "plain";
    case BlockFamily::Residual: return "residual";
    case BlockFamily::Dense: return "dense";
    }
    return "?";
}

BlockFamily family_from_string(const std::string& s) {
    if (s == "plain") return BlockFamily::Plain;
    if (s == "residual") return BlockFamily::Residual;
    if (s == "dense") return BlockFamily::Dense;
    throw ConfigError("unknown block family: '" + s + "' (plain|residual|dense)");
}

ModelSpec default_spec(BlockFamily family) {
    ModelSpec spec;
    spec.family = family;
    switch (family) {
    case BlockFamily::Plain: spec.stages = {{8, 1}, {16, 1}}; break;
    case BlockFamily::Residual: spec.stages = {{8, 1}, {16, 1}}; break;
    case BlockFamily::Dense: spec.stages = {{6, 2}, {12, 2}}; break;
    }
    return spec;
}

// ---- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(int in_c, int out_c, int kernel, int stride, int pad)
    : in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
    if (in_c < 1 || out_c < 1 || kernel < 1 || stride < 1 || pad < 0) {
        throw ConfigError("conv: bad hyperparameters");
    }
}

std::string Conv2d::describe() const {
    std::ostringstream s;
    s << "conv" << k_ << "x" << k_ << " " << in_c_ << "->" << out_c_ << " s" << stride_ << " p"
      << pad_;
    return s.str();
}

std::size_t Conv2d::param_count() const {
    return static_cast<std::size_t>(k_) * k_ * in_c_ * out_c_ + out_c_;
}

void Conv2d::bind(double* params, double* grads) {
    w_ = params;
    b_ = params + static_cast<std::size_t>(k_) * k_ * in_c_ * out_c_;
    dw_ = grads;
    db_ = grads + static_cast<std::size_t>(k_) * k_ * in_c_ * out_c_;
}

void Conv2d::init(Rng& rng) {
    const double fan_in = static_cast<double>(k_) * k_ * in_c_;
    const double bound = std::sqrt(3.0 / fan_in);
    const std::size_t nw = static_cast<std::size_t>(k_) * k_ * in_c_ * out_c_;
    for (std::size_t i = 0; i < nw; ++i) w_[i] = rng.uniform(-bound, bound);
    for (int i = 0; i < out_c_; ++i) b_[i] = 0.0;
}

std::array<int, 3> Conv2d::out_shape(std::array<int, 3> in) const {
    if (in[2] != in_c_) {
        throw ShapeError("conv: expected " + std::to_string(in_c_) + " input channels, got " +
                         std::to_string(in[2]));
    }
    const int oh = (in[0] + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (in[1] + 2 * pad_ - k_) / stride_ + 1;
    if (in[0] + 2 * pad_ < k_ || in[1] + 2 * pad_ < k_ || oh < 1 || ow < 1) {
        throw ShapeError("conv: input " + std::to_string(in[0]) + "x" + std::to_string(in[1]) +
                         " too small for kernel " + std::to_string(k_));
    }
    return {oh, ow, out_c_};
}

Tensor Conv2d::forward(const Tensor& x, bool record) {
    const auto os = out_shape({x.h, x.w, x.c});
    Tensor y(x.n, os[0], os[1], os[2]);
    const int oh = os[0], ow = os[1];

    for (int n = 0; n < x.n; ++n) {
        for (int r = 0; r < oh; ++r) {
            for (int col = 0; col < ow; ++col) {
                double* acc = y.row(n, r, col);
                for (int oc = 0; oc < out_c_; ++oc) acc[oc] = b_[oc];
                for (int kh = 0; kh < k_; ++kh) {
                    const int ih = r * stride_ - pad_ + kh;
                    if (ih < 0 || ih >= x.h) continue;
                    for (int kw = 0; kw < k_; ++kw) {
                        const int iw = col * stride_ - pad_ + kw;
                        if (iw < 0 || iw >= x.w) continue;
                        const double* xp = x.row(n, ih, iw);
                        const double* wp =
                            w_ + (static_cast<std::size_t>(kh) * k_ + kw) * in_c_ * out_c_;
                        for (int ic = 0; ic < in_c_; ++ic) {
                            const double xv = xp[ic];
                            const double* wr = wp + static_cast<std::size_t>(ic) * out_c_;
                            for (int oc = 0; oc < out_c_; ++oc) acc[oc] += xv * wr[oc];
                        }
                    }
                }
            }
        }
    }
    if (record) x_ = x;
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = x_;
    Tensor dx(x.n, x.h, x.w, x.c);

    for (int n = 0; n < x.n; ++n) {
        for (int r = 0; r < dy.h; ++r) {
            for (int col = 0; col < dy.w; ++col) {
                const double* dyp = dy.row(n, r, col);
                for (int oc = 0; oc < out_c_; ++oc) db_[oc] += dyp[oc];
                for (int kh = 0; kh < k_; ++kh) {
                    const int ih = r * stride_ - pad_ + kh;
                    if (ih < 0 || ih >= x.h) continue;
                    for (int kw = 0; kw < k_; ++kw) {
                        const int iw = col * stride_ - pad_ + kw;
                        if (iw < 0 || iw >= x.w) continue;
                        const double* xp = x.row(n, ih, iw);
                        double* dxp = dx.row(n, ih, iw);
                        const std::size_t base =
                            (static_cast<std::size_t>(kh) * k_ + kw) * in_c_ * out_c_;
                        for (int ic = 0; ic < in_c_; ++ic) {
                            const double xv = xp[ic];
                            const double* wr = w_ + base + static_cast<std::size_t>(ic) * out_c_;
                            double* dwr = dw_ + base + static_cast<std::size_t>(ic) * out_c_;
                            double acc = 0.0;
                            for (int oc = 0; oc < out_c_; ++oc) {
                                dwr[oc] += xv * dyp[oc];
                                acc += wr[oc] * dyp[oc];
                            }
                            dxp[ic] += acc;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

// ---- ReLU -----------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool record) {
    Tensor y = x;
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
    if (record) x_ = x;
    return y;
}

Tensor ReLU::backward(const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) {
        if (x_.v[i] <= 0.0) dx.v[i] = 0.0;
    }
    return dx;
}

// ---- MaxPool2d ------------------------------------------------------------

MaxPool2d::MaxPool2d(int kernel, int stride) : k_(kernel), stride_(stride) {
    if (kernel < 1 || stride < 1) throw ConfigError("maxpool: bad hyperparameters");
}

std::string MaxPool2d::describe() const {
    std::ostringstream s;
    s << "maxpool" << k_ << " s" << stride_;
    return s.str();
}

std::array<int, 3> MaxPool2d::out_shape(std::array<int, 3> in) const {
    if (in[0] < k_ || in[1] < k_) {
        throw ShapeError("maxpool: input " + std::to_string(in[0]) + "x" + std::to_string(in[1]) +
                         " smaller than window " + std::to_string(k_));
    }
    return {(in[0] - k_) / stride_ + 1, (in[1] - k_) / stride_ + 1, in[2]};
}

Tensor MaxPool2d::forward(const Tensor& x, bool record) {
    const auto os = out_shape({x.h, x.w, x.c});
    Tensor y(x.n, os[0], os[1], os[2]);
    if (record) {
        argmax_.assign(y.size(), 0);
        in_n_ = x.n;
        in_h_ = x.h;
        in_w_ = x.w;
        in_c_ = x.c;
    }
    std::size_t out_i = 0;
    for (int n = 0; n < x.n; ++n) {
        for (int r = 0; r < os[0]; ++r) {
            for (int col = 0; col < os[1]; ++col) {
                for (int c = 0; c < x.c; ++c, ++out_i) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (int kh = 0; kh < k_; ++kh) {
                        const int ih = r * stride_ + kh;
                        for (int kw = 0; kw < k_; ++kw) {
                            const int iw = col * stride_ + kw;
                            const std::size_t xi =
                                ((static_cast<std::size_t>(n) * x.h + ih) * x.w + iw) * x.c + c;
                            if (x.v[xi] > best) {
                                best = x.v[xi];
                                best_i = xi;
                            }
                        }
                    }
                    y.v[out_i] = best;
                    if (record) argmax_[out_i] = best_i;
                }
            }
        }
    }
    return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
    Tensor dx(in_n_, in_h_, in_w_, in_c_);
    for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[argmax_[i]] += dy.v[i];
    return dx;
}

// ---- GlobalAvgPool ----------------------------------------------------------

Tensor GlobalAvgPool::forward(const Tensor& x, bool record) {
    Tensor y(x.n, 1, 1, x.c);
    const double scale = 1.0 / (static_cast<double>(x.h) * x.w);
    for (int n = 0; n < x.n; ++n) {
        double* out = y.row(n, 0, 0);
        for (int r = 0; r < x.h; ++r) {
            for (int col = 0; col < x.w; ++col) {
                const double* xp = x.row(n, r, col);
                for (int c = 0; c < x.c; ++c) out[c] += xp[c];
            }
        }
        for (int c = 0; c < x.c; ++c) out[c] *= scale;
    }
    if (record) {
        in_n_ = x.n;
        in_h_ = x.h;
        in_w_ = x.w;
        in_c_ = x.c;
    }
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
    Tensor dx(in_n_, in_h_, in_w_, in_c_);
    const double scale = 1.0 / (static_cast<double>(in_h_) * in_w_);
    for (int n = 0; n < in_n_; ++n) {
        const double* dyp = dy.row(n, 0, 0);
        for (int r = 0; r < in_h_; ++r) {
            for (int col = 0; col < in_w_; ++col) {
                double* dxp = dx.row(n, r, col);
                for (int c = 0; c < in_c_; ++c) dxp[c] = dyp[c] * scale;
            }
        }
    }
    return dx;
}

// ---- Dense ------------------------------------------------------------------

Dense::Dense(int in_dim, int out_dim) : in_dim_(in_dim), out_dim_(out_dim) {
    if (in_dim < 1 || out_dim < 1) throw ConfigError("dense: bad dimensions");
}

std::string Dense::describe() const {
    std::ostringstream s;
    s << "dense " << in_dim_ << "->" << out_dim_;
    return s.str();
}

std::size_t Dense::param_count() const {
    return static_cast<std::size_t>(in_dim_) * out_dim_ + out_dim_;
}

void Dense::bind(double* params, double* grads) {
    w_ = params;
    b_ = params + static_cast<std::size_t>(in_dim_) * out_dim_;
    dw_ = grads;
    db_ = grads + static_cast<std::size_t>(in_dim_) * out_dim_;
}

void Dense::init(Rng& rng) {
    const double bound = std::sqrt(3.0 / in_dim_);
    const std::size_t nw = static_cast<std::size_t>(in_dim_) * out_dim_;
    for (std::size_t i = 0; i < nw; ++i) w_[i] = rng.uniform(-bound, bound);
    for (int i = 0; i < out_dim_; ++i) b_[i] = 0.0;
}

std::array<int, 3> Dense::out_shape(std::array<int, 3> in) const {
    if (in[0] != 1 || in[1] != 1 || in[2] != in_dim_) {
        throw ShapeError("dense: expected (1,1," + std::to_string(in_dim_) + "), got (" +
                         std::to_string(in[0]) + "," + std::to_string(in[1]) + "," +
                         std::to_string(in[2]) + ")");
    }
    return {1, 1, out_dim_};
}

Tensor Dense::forward(const Tensor& x, bool record) {
    out_shape({x.h, x.w, x.c});
    Tensor y(x.n, 1, 1, out_dim_);
    for (int n = 0; n < x.n; ++n) {
        const double* xp = x.row(n, 0, 0);
        double* yp = y.row(n, 0, 0);
        for (int o = 0; o < out_dim_; ++o) yp[o] = b_[o];
        for (int i = 0; i < in_dim_; ++i) {
            const double xv = xp[i];
            const double* wr = w_ + static_cast<std::size_t>(i) * out_dim_;
            for (int o = 0; o < out_dim_; ++o) yp[o] += xv * wr[o];
        }
    }
    if (record) x_ = x;
    return y;
}

Tensor Dense::backward(const Tensor& dy) {
    const Tensor& x = x_;
    Tensor dx(x.n, 1, 1, in_dim_);
    for (int n = 0; n < x.n; ++n) {
        const double* dyp = dy.row(n, 0, 0);
        const double* xp = x.row(n, 0, 0);
        double* dxp = dx.row(n, 0, 0);
        for (int o = 0; o < out_dim_; ++o) db_[o] += dyp[o];
        for (int i = 0; i < in_dim_; ++i) {
            const double* wr = w_ + static_cast<std::size_t>(i) * out_dim_;
            double* dwr = dw_ + static_cast<std::size_t>(i) * out_dim_;
            const double xv = xp[i];
            double acc = 0.0;
            for (int o = 0; o < out_dim_; ++o) {
                dwr[o] += xv * dyp[o];
                acc += wr[o] * dyp[o];
            }
            dxp[i] = acc;
        }
    }
    return dx;
}

// ---- ResidualBlock ----------------------------------------------------------

ResidualBlock::ResidualBlock(int channels)
    : channels_(channels),
      conv1_(channels, channels, 3, 1, 1),
      conv2_(channels, channels, 3, 1, 1) {}

std::string ResidualBlock::describe() const {
    return "residual_block c" + std::to_string(channels_);
}

std::size_t ResidualBlock::param_count() const {
    return conv1_.param_count() + conv2_.param_count();
}

void ResidualBlock::bind(double* params, double* grads) {
    conv1_.bind(params, grads);
    const std::size_t off = conv1_.param_count();
    conv2_.bind(params + off, grads + off);
}

void ResidualBlock::init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
}

namespace {

Tensor relu_of(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
    return y;
}

void add_relu_grad(const Tensor& pre, const Tensor& d_post, Tensor& d_pre_accum) {
    for (std::size_t i = 0; i < pre.v.size(); ++i) {
        if (pre.v[i] > 0.0) d_pre_accum.v[i] += d_post.v[i];
    }
}

} // namespace

Tensor ResidualBlock::forward(const Tensor& x, bool record) {
    Tensor t = conv1_.forward(relu_of(x), record);
    Tensor u = conv2_.forward(relu_of(t), record);
    if (record) {
        x_ = x;
        t_ = t;
    }
    Tensor y = x;
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += u.v[i];
    return y;
}

Tensor ResidualBlock::backward(const Tensor& dy) {
    Tensor da2 = conv2_.backward(dy);
    Tensor dt(t_.n, t_.h, t_.w, t_.c);
    add_relu_grad(t_, da2, dt);
    Tensor da1 = conv1_.backward(dt);
    Tensor dx = dy; // identity path
    add_relu_grad(x_, da1, dx);
    return dx;
}

// ---- DenseBlock ---------------------------------------------------------------

DenseBlock::DenseBlock(int in_c, int growth, int layers)
    : in_c_(in_c), growth_(growth), layers_(layers) {
    if (growth < 1 || layers < 1) throw ConfigError("dense block: bad hyperparameters");
    convs_.reserve(layers);
    for (int l = 0; l < layers; ++l) {
        convs_.emplace_back(in_c + l * growth, growth, 3, 1, 1);
    }
}

std::string DenseBlock::describe() const {
    std::ostringstream s;
    s << "dense_block in" << in_c_ << " g" << growth_ << " x" << layers_;
    return s.str();
}

std::size_t DenseBlock::param_count() const {
    std::size_t total = 0;
    for (const auto& c : convs_) total += c.param_count();
    return total;
}

void DenseBlock::bind(double* params, double* grads) {
    std::size_t off = 0;
    for (auto& c : convs_) {
        c.bind(params + off, grads + off);
        off += c.param_count();
    }
}

void DenseBlock::init(Rng& rng) {
    for (auto& c : convs_) c.init(rng);
}

std::array<int, 3> DenseBlock::out_shape(std::array<int, 3> in) const {
    if (in[2] != in_c_) {
        throw ShapeError("dense block: expected " + std::to_string(in_c_) +
                         " input channels, got " + std::to_string(in[2]));
    }
    return {in[0], in[1], in_c_ + layers_ * growth_};
}

Tensor DenseBlock::forward(const Tensor& x, bool record) {
    out_shape({x.h, x.w, x.c});
    if (record) {
        states_.clear();
        states_.reserve(layers_);
    }
    Tensor state = x;
    for (int l = 0; l < layers_; ++l) {
        if (record) states_.push_back(state);
        Tensor g = convs_[l].forward(relu_of(state), record);
        Tensor next(state.n, state.h, state.w, state.c + growth_);
        for (int n = 0; n < state.n; ++n) {
            for (int r = 0; r < state.h; ++r) {
                for (int col = 0; col < state.w; ++col) {
                    const double* sp = state.row(n, r, col);
                    const double* gp = g.row(n, r, col);
                    double* np = next.row(n, r, col);
                    std::memcpy(np, sp, sizeof(double) * state.c);
                    std::memcpy(np + state.c, gp, sizeof(double) * growth_);
                }
            }
        }
        state = std::move(next);
    }
    return state;
}

Tensor DenseBlock::backward(const Tensor& dy) {
    Tensor dstate = dy;
    for (int l = layers_ - 1; l >= 0; --l) {
        const Tensor& pre = states_[static_cast<std::size_t>(l)];
        Tensor dprev(pre.n, pre.h, pre.w, pre.c);
        Tensor dg(pre.n, pre.h, pre.w, growth_);
        for (int n = 0; n < pre.n; ++n) {
            for (int r = 0; r < pre.h; ++r) {
                for (int col = 0; col < pre.w; ++col) {
                    const double* dp = dstate.row(n, r, col);
                    std::memcpy(dprev.row(n, r, col), dp, sizeof(double) * pre.c);
                    std::memcpy(dg.row(n, r, col), dp + pre.c, sizeof(double) * growth_);
                }
            }
        }
        Tensor da = convs_[static_cast<std::size_t>(l)].backward(dg);
        add_relu_grad(pre, da, dprev);
        dstate = std::move(dprev);
    }
    return dstate;
}

// ---- spec / network ------------------------------------------------------------

void validate_spec(const ModelSpec& spec) {
    if (spec.input_side < 4) throw ConfigError("model: input_side must be >= 4");
    if (spec.stages.empty()) throw ConfigError("model: at least one stage required");
    for (const auto& st : spec.stages) {
        if (st.filters < 1) throw ConfigError("model: stage filters must be >= 1");
        if (st.blocks < 1) throw ConfigError("model: stage blocks must be >= 1");
    }
}

Network::Network(const ModelSpec& spec) : spec_(spec) {
    validate_spec(spec);

    int c = 3;
    for (const auto& st : spec.stages) {
        switch (spec.family) {
        case BlockFamily::Plain:
            for (int b = 0; b < st.blocks; ++b) {
                layers_.push_back(std::make_unique<Conv2d>(c, st.filters, 3, 1, 1));
                layers_.push_back(std::make_unique<ReLU>());
                c = st.filters;
            }
            break;
        case BlockFamily::Residual:
            layers_.push_back(std::make_unique<Conv2d>(c, st.filters, 3, 1, 1));
            c = st.filters;
            for (int b = 0; b < st.blocks; ++b) {
                layers_.push_back(std::make_unique<ResidualBlock>(c));
            }
            break;
        case BlockFamily::Dense: {
            layers_.push_back(std::make_unique<DenseBlock>(c, st.filters, st.blocks));
            c += st.filters * st.blocks;
            layers_.push_back(std::make_unique<ReLU>());
            const int compressed = std::max(1, c / 2);
            layers_.push_back(std::make_unique<Conv2d>(c, compressed, 1, 1, 0));
            c = compressed;
            break;
        }
        }
        layers_.push_back(std::make_unique<MaxPool2d>(2, 2));
    }
    layers_.push_back(std::make_unique<GlobalAvgPool>());
    layers_.push_back(std::make_unique<Dense>(c, 1));

    // shape sanity over the whole stack
    std::array<int, 3> shape = {spec.input_side, spec.input_side, 3};
    for (const auto& l : layers_) {
        try {
            shape = l->out_shape(shape);
        } catch (const ShapeError& e) {
            throw ConfigError(std::string("model spec does not fit its input: ") + e.what());
        }
    }

    std::size_t total = 0;
    for (const auto& l : layers_) total += l->param_count();
    params_.assign(total, 0.0);
    grads_.assign(total, 0.0);
    std::size_t off = 0;
    for (const auto& l : layers_) {
        l->bind(params_.data() + off, grads_.data() + off);
        off += l->param_count();
    }
}

void Network::init_params(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x696e6974)); // init stream
    for (const auto& l : layers_) l->init(rng);
}

void Network::check_input(const Tensor& batch) const {
    if (batch.h != spec_.input_side || batch.w != spec_.input_side || batch.c != 3) {
        throw ShapeError("network: expected (N," + std::to_string(spec_.input_side) + "," +
                         std::to_string(spec_.input_side) + ",3), got " + batch.shape_str());
    }
    if (batch.n < 1) throw ShapeError("network: empty batch");
}

namespace {

double sigmoid_clamped(double z) {
    const double zc = std::clamp(z, -kLogitClamp, kLogitClamp);
    return 1.0 / (1.0 + std::exp(-zc));
}

double softplus(double t) {
    return std::max(t, 0.0) + std::log1p(std::exp(-std::fabs(t)));
}

} // namespace

std::vector<double> Network::forward(const Tensor& batch, bool record) {
    check_input(batch);
    Tensor cur = batch;
    for (const auto& l : layers_) cur = l->forward(cur, record);
    if (record) logits_ = cur.v;
    std::vector<double> scores(cur.v.size());
    for (std::size_t i = 0; i < cur.v.size(); ++i) scores[i] = sigmoid_clamped(cur.v[i]);
    return scores;
}

double weighted_bce(const std::vector<double>& logits, const std::vector<int>& labels,
                    double pos_weight, std::vector<double>* dlogits) {
    if (logits.size() != labels.size()) {
        throw LabelError("loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.size()) + " scores");
    }
    if (logits.empty()) throw LabelError("loss: empty batch");
    if (dlogits) dlogits->assign(logits.size(), 0.0);

    const double inv_n = 1.0 / static_cast<double>(logits.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const int y = labels[i];
        if (y != 0 && y != 1) {
            throw LabelError("loss: label " + std::to_string(y) + " is not binary");
        }
        const double z = logits[i];
        // -log s = softplus(-z), -log(1-s) = softplus(z); stable for any
        // finite z, and non-finite z propagates into the loss so training
        // divergence is visible
        loss += y == 1 ? pos_weight * softplus(-z) : softplus(z);
        if (dlogits) {
            const double s = 1.0 / (1.0 + std::exp(-z));
            const double d = y == 1 ? -pos_weight * (1.0 - s) : s;
            (*dlogits)[i] = d * inv_n;
        }
    }
    return loss * inv_n;
}

double Network::forward_backward(const Tensor& batch, const std::vector<int>& labels,
                                 double pos_weight) {
    std::fill(grads_.begin(), grads_.end(), 0.0);
    forward(batch, true);

    std::vector<double> dlogits;
    const double loss = weighted_bce(logits_, labels, pos_weight, &dlogits);

    Tensor dy(batch.n, 1, 1, 1);
    dy.v = dlogits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        dy = (*it)->backward(dy);
    }
    return loss;
}

// ---- resampling -------------------------------------------------------------

std::vector<double> resize_area(const std::vector<double>& src, int src_side, int dst_side) {
    if (src_side == dst_side) return src;
    if (src_side < 1 || dst_side < 1) throw ShapeError("resize: bad sides");

    auto pass = [](const std::vector<double>& in, int rows, int s, int d) {
        // box-average along the row dimension of an (rows, s, 3) image
        std::vector<double> out(static_cast<std::size_t>(rows) * d * 3, 0.0);
        const double ratio = static_cast<double>(s) / d;
        for (int j = 0; j < d; ++j) {
            const double x0 = j * ratio;
            const double x1 = (j + 1) * ratio;
            const int i0 = static_cast<int>(std::floor(x0));
            const int i1 = std::min(s - 1, static_cast<int>(std::ceil(x1)) - 1);
            for (int r = 0; r < rows; ++r) {
                double acc[3] = {0, 0, 0};
                double wsum = 0.0;
                for (int i = i0; i <= i1; ++i) {
                    const double overlap =
                        std::min(x1, static_cast<double>(i) + 1.0) - std::max(x0, static_cast<double>(i));
                    if (overlap <= 0.0) continue;
                    const std::size_t si = (static_cast<std::size_t>(r) * s + i) * 3;
                    acc[0] += overlap * in[si];
                    acc[1] += overlap * in[si + 1];
                    acc[2] += overlap * in[si + 2];
                    wsum += overlap;
                }
                const std::size_t di = (static_cast<std::size_t>(r) * d + j) * 3;
                out[di] = acc[0] / wsum;
                out[di + 1] = acc[1] / wsum;
                out[di + 2] = acc[2] / wsum;
            }
        }
        return out;
    };

    // horizontal pass, then transpose trick for the vertical one
    std::vector<double> tmp = pass(src, src_side, src_side, dst_side); // (src, dst, 3)
    std::vector<double> tmp_t(static_cast<std::size_t>(dst_side) * src_side * 3);
    for (int r = 0; r < src_side; ++r)
        for (int c = 0; c < dst_side; ++c)
            for (int b = 0; b < 3; ++b)
                tmp_t[(static_cast<std::size_t>(c) * src_side + r) * 3 + b] =
                    tmp[(static_cast<std::size_t>(r) * dst_side + c) * 3 + b];
    std::vector<double> out_t = pass(tmp_t, dst_side, src_side, dst_side); // (dst, dst, 3)
    std::vector<double> out(static_cast<std::size_t>(dst_side) * dst_side * 3);
    for (int r = 0; r < dst_side; ++r)
        for (int c = 0; c < dst_side; ++c)
            for (int b = 0; b < 3; ++b)
                out[(static_cast<std::size_t>(r) * dst_side + c) * 3 + b] =
                    out_t[(static_cast<std::size_t>(c) * dst_side + r) * 3 + b];
    return out;
}

std::vector<double> tile_to_sample(const geo::ImageTile& tile, int input_side) {
    if (tile.side_px < 1 || tile.pixels.size() !=
                                static_cast<std::size_t>(tile.side_px) * tile.side_px * 3) {
        throw ShapeError("tile_to_sample: tile is not square RGB");
    }
    std::vector<double> s = resize_area(tile.pixels, tile.side_px, input_side);
    // per-tile standardization; scene brightness varies, structure matters
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    const double scale = 1.0 / (std::sqrt(var / static_cast<double>(s.size())) + 1e-6);
    for (double& v : s) v = (v - mean) * scale;
    return s;
}

// ---- training -----------------------------------------------------------------

namespace {

Tensor gather_batch(const std::vector<std::vector<double>>& samples,
                    const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                    int side) {
    Tensor batch(static_cast<int>(end - begin), side, side, 3);
    const std::size_t stride = static_cast<std::size_t>(side) * side * 3;
    for (std::size_t i = begin; i < end; ++i) {
        std::copy_n(samples[order[i]].data(), stride, batch.v.data() + (i - begin) * stride);
    }
    return batch;
}

} // namespace

TrainedModel train(const std::vector<dataset::LabeledTile>& tiles,
                   const dataset::DatasetSplit& split, const ModelSpec& spec,
                   const TrainConfig& cfg) {
    validate_spec(spec);
    if (cfg.learning_rate < 0.0) throw ConfigError("train: negative learning rate");
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (split.train.empty() || split.val.empty()) {
        throw ConfigError("train: empty train or validation split");
    }

    // resample every needed tile once up front
    std::vector<std::vector<double>> samples(tiles.size());
    std::vector<int> labels(tiles.size(), 0);
    auto prepare = [&](const std::vector<std::size_t>& idx) {
        for (std::size_t i : idx) {
            samples[i] = tile_to_sample(tiles[i].tile, spec.input_side);
            labels[i] = tiles[i].label;
        }
    };
    prepare(split.train);
    prepare(split.val);

    double pos_weight = cfg.pos_weight;
    if (pos_weight <= 0.0) {
        std::size_t pos = 0;
        for (std::size_t i : split.train) pos += static_cast<std::size_t>(labels[i]);
        const std::size_t neg = split.train.size() - pos;
        pos_weight = (pos > 0 && neg > 0)
                         ? static_cast<double>(neg) / static_cast<double>(pos)
                         : 1.0;
    }

    Network net(spec);
    net.init_params(cfg.seed);
    std::vector<double> velocity(net.param_count(), 0.0);

    std::vector<int> val_labels;
    val_labels.reserve(split.val.size());
    for (std::size_t i : split.val) val_labels.push_back(labels[i]);

    auto score_split = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> out;
        out.reserve(idx.size());
        for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(cfg.batch_size));
            Tensor batch = gather_batch(samples, idx, b, e, spec.input_side);
            auto s = net.forward(batch, false);
            out.insert(out.end(), s.begin(), s.end());
        }
        return out;
    };

    TrainedModel best;
    best.spec = spec;
    best.params = net.params();
    double best_auc = -1.0;

    Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566)); // epoch shuffles
    std::vector<std::size_t> order = split.train;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            Tensor batch = gather_batch(samples, order, b, e, spec.input_side);
            std::vector<int> batch_labels;
            batch_labels.reserve(e - b);
            for (std::size_t i = b; i < e; ++i) batch_labels.push_back(labels[order[i]]);

            const double loss = net.forward_backward(batch, batch_labels, pos_weight);
            if (!std::isfinite(loss)) {
                throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                      std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(e - b);

            auto& p = net.params();
            auto& g = net.grads();
            if (cfg.optimizer == TrainConfig::Optimizer::Momentum) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * g[i];
                    p[i] += velocity[i];
                }
            } else {
                for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * g[i];
            }
        }

        const auto val_scores = score_split(split.val);
        const double val_auc = eval::auc(eval::roc_curve(val_scores, val_labels));

        EpochStats st;
        st.epoch = epoch;
        st.loss = loss_sum / static_cast<double>(order.size());
        st.val_auc = val_auc;
        best.history.push_back(st);

        if (val_auc > best_auc) {
            best_auc = val_auc;
            best.params = net.params();
        }
    }
    return best;
}

// ---- scoring ---------------------------------------------------------------

Scorer::Scorer(const TrainedModel& model) : spec_(model.spec), net_(model.spec) {
    if (model.params.size() != net_.param_count()) {
        throw DataError("checkpoint parameter count does not match its spec");
    }
    net_.params() = model.params;
}

double Scorer::score(const geo::ImageTile& tile) {
    Tensor batch(1, spec_.input_side, spec_.input_side, 3);
    batch.v = tile_to_sample(tile, spec_.input_side);
    return net_.forward(batch, false)[0];
}

std::vector<double> Scorer::score_batch(const std::vector<dataset::LabeledTile>& tiles) {
    std::vector<double> out;
    out.reserve(tiles.size());
    for (const auto& t : tiles) out.push_back(score(t.tile));
    return out;
}

double predict_score(const TrainedModel& model, const geo::ImageTile& tile) {
    Scorer scorer(model);
    return scorer.score(tile);
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'M', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b, 8);
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["family"] = to_string(model.spec.family);
    header["input_side"] = model.spec.input_side;
    auto stages = nlohmann::json::array();
    for (const auto& st : model.spec.stages) {
        stages.push_back({st.filters, st.blocks});
    }
    header["stages"] = stages;
    header["param_count"] = model.params.size();
    auto history = nlohmann::json::array();
    for (const auto& h : model.history) history.push_back({h.epoch, h.loss, h.val_auc});
    header["history"] = history;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<std::uint32_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (double p : model.params) put_f64(out, p);
    if (!out) throw DataError("short write on checkpoint: " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("not a model checkpoint: " + path.string());
    }
    const std::uint32_t hlen = get_u32(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw DataError("truncated checkpoint header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad checkpoint header: " + std::string(e.what()));
    }

    TrainedModel model;
    model.spec.family = family_from_string(header.at("family").get<std::string>());
    model.spec.input_side = header.at("input_side").get<int>();
    model.spec.stages.clear();
    for (const auto& st : header.at("stages")) {
        model.spec.stages.push_back({st.at(0).get<int>(), st.at(1).get<int>()});
    }
    for (const auto& h : header.at("history")) {
        EpochStats st;
        st.epoch = h.at(0).get<int>();
        st.loss = h.at(1).get<double>();
        st.val_auc = h.at(2).get<double>();
        model.history.push_back(st);
    }
    const auto n = header.at("param_count").get<std::size_t>();
    model.params.resize(n);
    for (std::size_t i = 0; i < n; ++i) model.params[i] = get_f64(in);
    if (!in) throw DataError("truncated checkpoint parameters: " + path.string());
    return model;
}

} // namespace hmf::model
