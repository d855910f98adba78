#include "geos/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geos/errors.hpp"
#include "geos/rng.hpp"

namespace geos::net {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

Tensor relu_of(const Tensor& x) {
    Tensor y = Tensor::zeros_like(x);
    kernels::relu_forward(x.data(), y.data(), x.numel());
    return y;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int ic, int oc, int k, int stride, int pad, bool bias_flag)
    : Layer(std::move(name)), has_bias(bias_flag), ic_(ic), oc_(oc), k_(k), stride_(stride),
      pad_(pad) {
    weight.name = name_ + ".weight";
    weight.value = Tensor({oc, ic, k, k});
    weight.grad = Tensor::zeros_like(weight.value);
    if (has_bias) {
        bias.name = name_ + ".bias";
        bias.value = Tensor({oc});
        bias.grad = Tensor({oc});
    }
}

Tensor Conv2d::forward(const Tensor& x, bool) {
    require(x.rank() == 4 && x.dim(1) == ic_,
            name_ + ": expected input [n," + std::to_string(ic_) + ",h,w], got " + x.shape_str());
    kernels::ConvShape s{x.dim(0), ic_, x.dim(2), x.dim(3), oc_, k_, k_, stride_, pad_};
    require(s.oh() >= 1 && s.ow() >= 1, name_ + ": input " + x.shape_str() + " too small");
    x_ = x;
    Tensor y({s.n, oc_, s.oh(), s.ow()});
    kernels::conv2d_forward(x.data(), weight.value.data(),
                            has_bias ? bias.value.data() : nullptr, y.data(), s);
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    kernels::ConvShape s{x_.dim(0), ic_, x_.dim(2), x_.dim(3), oc_, k_, k_, stride_, pad_};
    require(dy.rank() == 4 && dy.dim(0) == s.n && dy.dim(1) == oc_ && dy.dim(2) == s.oh() &&
                dy.dim(3) == s.ow(),
            name_ + ": gradient shape " + dy.shape_str() + " does not match forward output");
    Tensor dx = Tensor::zeros_like(x_);
    kernels::conv2d_backward_data(dy.data(), weight.value.data(), dx.data(), s);
    kernels::conv2d_backward_weights(x_.data(), dy.data(), weight.grad.data(),
                                     has_bias ? bias.grad.data() : nullptr, s);
    return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
}

void Conv2d::collect_state(std::vector<StateRef>& out) {
    out.push_back({weight.name, &weight.value});
    if (has_bias) out.push_back({bias.name, &bias.value});
}

std::unique_ptr<Layer> Conv2d::clone() const { return std::make_unique<Conv2d>(*this); }

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int c, double momentum, double eps)
    : Layer(std::move(name)), c_(c), momentum_(momentum), eps_(eps) {
    gamma.name = name_ + ".gamma";
    gamma.value = Tensor({c});
    gamma.value.fill(1.0);
    gamma.grad = Tensor({c});
    beta.name = name_ + ".beta";
    beta.value = Tensor({c});
    beta.grad = Tensor({c});
    running_mean = Tensor({c});
    running_var = Tensor({c});
    running_var.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    require(x.rank() == 4 && x.dim(1) == c_,
            name_ + ": expected input [n," + std::to_string(c_) + ",h,w], got " + x.shape_str());
    x_ = x;
    fwd_was_train_ = train;
    int n = x.dim(0), hw = x.dim(2) * x.dim(3);
    Tensor y = Tensor::zeros_like(x);
    if (train) {
        save_mean_ = Tensor({c_});
        save_invstd_ = Tensor({c_});
        kernels::batchnorm_forward_train(x.data(), gamma.value.data(), beta.value.data(),
                                         running_mean.data(), running_var.data(), momentum_, eps_,
                                         y.data(), save_mean_.data(), save_invstd_.data(), n, c_,
                                         hw);
    } else {
        kernels::batchnorm_forward_eval(x.data(), gamma.value.data(), beta.value.data(),
                                        running_mean.data(), running_var.data(), eps_, y.data(), n,
                                        c_, hw);
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    require(dy.same_shape(x_), name_ + ": gradient shape " + dy.shape_str() +
                                   " does not match forward input " + x_.shape_str());
    int n = x_.dim(0), hw = x_.dim(2) * x_.dim(3);
    Tensor dx = Tensor::zeros_like(x_);
    if (fwd_was_train_) {
        kernels::batchnorm_backward_train(x_.data(), dy.data(), gamma.value.data(),
                                          save_mean_.data(), save_invstd_.data(), dx.data(),
                                          gamma.grad.data(), beta.grad.data(), n, c_, hw);
    } else {
        kernels::batchnorm_backward_eval(x_.data(), dy.data(), gamma.value.data(),
                                         running_mean.data(), running_var.data(), eps_, dx.data(),
                                         gamma.grad.data(), beta.grad.data(), n, c_, hw);
    }
    return dx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm2d::collect_state(std::vector<StateRef>& out) {
    out.push_back({gamma.name, &gamma.value});
    out.push_back({beta.name, &beta.value});
    out.push_back({name_ + ".running_mean", &running_mean});
    out.push_back({name_ + ".running_var", &running_var});
}

std::unique_ptr<Layer> BatchNorm2d::clone() const { return std::make_unique<BatchNorm2d>(*this); }

// ----------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, bool) {
    x_ = x;
    return relu_of(x);
}

Tensor ReLU::backward(const Tensor& dy) {
    require(dy.same_shape(x_), name_ + ": gradient shape mismatch");
    Tensor dx = Tensor::zeros_like(x_);
    kernels::relu_backward(x_.data(), dy.data(), dx.data(), x_.numel());
    return dx;
}

std::unique_ptr<Layer> ReLU::clone() const { return std::make_unique<ReLU>(*this); }

// ------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(std::string name, int k, int stride, int pad)
    : Layer(std::move(name)), k_(k), stride_(stride), pad_(pad) {}

Tensor MaxPool2d::forward(const Tensor& x, bool) {
    require(x.rank() == 4, name_ + ": expected rank-4 input, got " + x.shape_str());
    shape_ = kernels::PoolShape{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k_, stride_, pad_};
    require(shape_.oh() >= 1 && shape_.ow() >= 1, name_ + ": input " + x.shape_str() + " too small");
    Tensor y({shape_.n, shape_.c, shape_.oh(), shape_.ow()});
    argmax_.assign(static_cast<size_t>(y.numel()), 0);
    kernels::maxpool2d_forward(x.data(), y.data(), argmax_.data(), shape_);
    return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
    require(dy.rank() == 4 && dy.dim(0) == shape_.n && dy.dim(1) == shape_.c &&
                dy.dim(2) == shape_.oh() && dy.dim(3) == shape_.ow(),
            name_ + ": gradient shape mismatch");
    Tensor dx({shape_.n, shape_.c, shape_.ih, shape_.iw});
    kernels::maxpool2d_backward(dy.data(), argmax_.data(), dx.data(), shape_);
    return dx;
}

std::unique_ptr<Layer> MaxPool2d::clone() const { return std::make_unique<MaxPool2d>(*this); }

// --------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, bool) {
    require(x.rank() == 4, name_ + ": expected rank-4 input, got " + x.shape_str());
    in_shape_ = x.shape();
    Tensor y({x.dim(0), x.dim(1)});
    kernels::gap_forward(x.data(), y.data(), x.dim(0), x.dim(1), x.dim(2) * x.dim(3));
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
    require(dy.rank() == 2 && dy.dim(0) == in_shape_[0] && dy.dim(1) == in_shape_[1],
            name_ + ": gradient shape mismatch");
    Tensor dx(in_shape_);
    kernels::gap_backward(dy.data(), dx.data(), in_shape_[0], in_shape_[1],
                          in_shape_[2] * in_shape_[3]);
    return dx;
}

std::unique_ptr<Layer> GlobalAvgPool::clone() const {
    return std::make_unique<GlobalAvgPool>(*this);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in, int out, bool bias_flag)
    : Layer(std::move(name)), has_bias(bias_flag), in_(in), out_(out) {
    weight.name = name_ + ".weight";
    weight.value = Tensor({out, in});
    weight.grad = Tensor::zeros_like(weight.value);
    if (has_bias) {
        bias.name = name_ + ".bias";
        bias.value = Tensor({out});
        bias.grad = Tensor({out});
    }
}

Tensor Linear::forward(const Tensor& x, bool) {
    require(x.rank() == 2 && x.dim(1) == in_,
            name_ + ": expected input [n," + std::to_string(in_) + "], got " + x.shape_str());
    x_ = x;
    Tensor y({x.dim(0), out_});
    kernels::linear_forward(x.data(), weight.value.data(),
                            has_bias ? bias.value.data() : nullptr, y.data(), x.dim(0), in_, out_);
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    require(dy.rank() == 2 && dy.dim(0) == x_.dim(0) && dy.dim(1) == out_,
            name_ + ": gradient shape mismatch");
    Tensor dx = Tensor::zeros_like(x_);
    kernels::linear_backward_data(dy.data(), weight.value.data(), dx.data(), x_.dim(0), in_, out_);
    kernels::linear_backward_params(x_.data(), dy.data(), weight.grad.data(),
                                    has_bias ? bias.grad.data() : nullptr, x_.dim(0), in_, out_);
    return dx;
}

void Linear::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
}

void Linear::collect_state(std::vector<StateRef>& out) {
    out.push_back({weight.name, &weight.value});
    if (has_bias) out.push_back({bias.name, &bias.value});
}

std::unique_ptr<Layer> Linear::clone() const { return std::make_unique<Linear>(*this); }

// ------------------------------------------------------------ Sequential

Tensor Sequential::forward(const Tensor& x, bool train) {
    Tensor h = x;
    for (auto& layer : layers_) h = layer->forward(h, train);
    return h;
}

Tensor Sequential::backward(const Tensor& dy) {
    Tensor g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

void Sequential::collect_params(std::vector<Param*>& out) {
    for (auto& layer : layers_) layer->collect_params(out);
}

void Sequential::collect_state(std::vector<StateRef>& out) {
    for (auto& layer : layers_) layer->collect_state(out);
}

std::unique_ptr<Layer> Sequential::clone() const {
    auto c = std::make_unique<Sequential>(name_);
    for (auto& layer : layers_) c->add(layer->clone());
    return c;
}

// --------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(std::string name, int in, int out, int stride)
    : Layer(std::move(name)), in_(in), out_(out), stride_(stride),
      conv1_(name_ + ".conv1", in, out, 3, stride, 1, false), bn1_(name_ + ".bn1", out),
      conv2_(name_ + ".conv2", out, out, 3, 1, 1, false), bn2_(name_ + ".bn2", out) {
    if (stride != 1 || in != out) {
        down_conv_ = std::make_unique<Conv2d>(name_ + ".down.conv", in, out, 1, stride, 0, false);
        down_bn_ = std::make_unique<BatchNorm2d>(name_ + ".down.bn", out);
    }
}

Tensor ResidualBlock::forward(const Tensor& x, bool train) {
    pre1_ = bn1_.forward(conv1_.forward(x, train), train);
    Tensor h = relu_of(pre1_);
    Tensor main = bn2_.forward(conv2_.forward(h, train), train);
    Tensor skip = down_conv_ ? down_bn_->forward(down_conv_->forward(x, train), train) : x;
    sum_ = Tensor::zeros_like(main);
    kernels::add(main.data(), skip.data(), sum_.data(), main.numel());
    return relu_of(sum_);
}

Tensor ResidualBlock::backward(const Tensor& dy) {
    require(dy.same_shape(sum_), name_ + ": gradient shape mismatch");
    Tensor dsum = Tensor::zeros_like(sum_);
    kernels::relu_backward(sum_.data(), dy.data(), dsum.data(), sum_.numel());
    Tensor dh = conv2_.backward(bn2_.backward(dsum));
    Tensor dpre1 = Tensor::zeros_like(pre1_);
    kernels::relu_backward(pre1_.data(), dh.data(), dpre1.data(), pre1_.numel());
    Tensor dx = conv1_.backward(bn1_.backward(dpre1));
    if (down_conv_) {
        dx.add_(down_conv_->backward(down_bn_->backward(dsum)));
    } else {
        dx.add_(dsum);
    }
    return dx;
}

void ResidualBlock::collect_params(std::vector<Param*>& out) {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    if (down_conv_) {
        down_conv_->collect_params(out);
        down_bn_->collect_params(out);
    }
}

void ResidualBlock::collect_state(std::vector<StateRef>& out) {
    conv1_.collect_state(out);
    bn1_.collect_state(out);
    conv2_.collect_state(out);
    bn2_.collect_state(out);
    if (down_conv_) {
        down_conv_->collect_state(out);
        down_bn_->collect_state(out);
    }
}

std::unique_ptr<Layer> ResidualBlock::clone() const {
    auto c = std::make_unique<ResidualBlock>(name_, in_, out_, stride_);
    c->conv1_ = conv1_;
    c->bn1_ = bn1_;
    c->conv2_ = conv2_;
    c->bn2_ = bn2_;
    if (down_conv_) {
        *c->down_conv_ = *down_conv_;
        *c->down_bn_ = *down_bn_;
    }
    return c;
}

// ------------------------------------------------------------- GeosModel

GeosModel::GeosModel(BuildConfig cfg, std::unique_ptr<Sequential> theta_features,
                     std::unique_ptr<Linear> theta_head, std::unique_ptr<Sequential> lambda_trunk,
                     std::unique_ptr<Conv2d> lambda_refine, std::unique_ptr<Linear> lambda_head)
    : cfg_(std::move(cfg)), theta_features_(std::move(theta_features)),
      theta_head_(std::move(theta_head)), lambda_trunk_(std::move(lambda_trunk)),
      lambda_refine_(std::move(lambda_refine)), lambda_head_(std::move(lambda_head)) {}

namespace {

void init_param(Param& p, uint64_t root_seed) {
    if (p.name.ends_with(".gamma")) {
        p.value.fill(1.0);
        return;
    }
    if (p.name.ends_with(".beta") || p.name.ends_with(".bias")) {
        p.value.zero();
        return;
    }
    int64_t fan_in = 1;
    for (int d = 1; d < p.value.rank(); ++d) fan_in *= p.value.dim(d);
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(root_seed, p.name));
    for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = rng.uniform(-bound, bound);
}

}  // namespace

GeosModel GeosModel::build(const BuildConfig& cfg) {
    if (cfg.profile != "desk_cnn" && cfg.profile != "resnet18")
        throw ConfigError("unknown backbone profile: " + cfg.profile);
    if (cfg.input_size < 8)
        throw ConfigError("input_size must be at least 8, got " + std::to_string(cfg.input_size));
    if (cfg.input_channels < 1 || cfg.num_classes < 2 || cfg.num_pretext < 2)
        throw ConfigError("input_channels must be positive and class counts at least 2");

    auto feats = std::make_unique<Sequential>("theta/features");
    int feat_c = 0;
    if (cfg.profile == "desk_cnn") {
        const int strides[4] = {2, 2, 2, 1};
        int prev = cfg.input_channels;
        for (int i = 0; i < 4; ++i) {
            int ch = cfg.desk_channels[static_cast<size_t>(i)];
            if (ch < 1) throw ConfigError("desk channel widths must be positive");
            std::string p = "theta/features.s" + std::to_string(i + 1);
            feats->add(std::make_unique<Conv2d>(p + ".conv", prev, ch, 3, strides[i], 1, false));
            feats->add(std::make_unique<BatchNorm2d>(p + ".bn", ch));
            feats->add(std::make_unique<ReLU>(p + ".relu"));
            prev = ch;
        }
        feat_c = prev;
    } else {
        feats->add(std::make_unique<Conv2d>("theta/features.conv1", cfg.input_channels, 64, 7, 2,
                                            3, false));
        feats->add(std::make_unique<BatchNorm2d>("theta/features.bn1", 64));
        feats->add(std::make_unique<ReLU>("theta/features.relu1"));
        feats->add(std::make_unique<MaxPool2d>("theta/features.pool", 3, 2, 1));
        const int widths[4] = {64, 128, 256, 512};
        int prev = 64;
        for (int l = 0; l < 4; ++l) {
            for (int b = 0; b < 2; ++b) {
                std::string p =
                    "theta/features.layer" + std::to_string(l + 1) + "." + std::to_string(b);
                int stride = (b == 0 && l > 0) ? 2 : 1;
                feats->add(std::make_unique<ResidualBlock>(p, prev, widths[l], stride));
                prev = widths[l];
            }
        }
        feat_c = 512;
    }

    auto head = std::make_unique<Linear>("theta/head", feat_c, cfg.num_classes, true);
    auto trunk = std::make_unique<Sequential>("lambda/trunk");
    trunk->add(std::make_unique<ResidualBlock>("lambda/trunk.block", feat_c, feat_c, 1));
    auto refine = std::make_unique<Conv2d>("lambda/refine", feat_c, feat_c, 1, 1, 0, true);
    auto pretext = std::make_unique<Linear>("lambda/head", feat_c, cfg.num_pretext, true);

    GeosModel m(cfg, std::move(feats), std::move(head), std::move(trunk), std::move(refine),
                std::move(pretext));
    std::vector<Param*> params;
    m.theta_features_->collect_params(params);
    m.theta_head_->collect_params(params);
    m.lambda_trunk_->collect_params(params);
    m.lambda_refine_->collect_params(params);
    m.lambda_head_->collect_params(params);
    for (Param* p : params) init_param(*p, cfg.seed);
    if (cfg.zero_init_refine) {
        m.lambda_refine_->weight.value.zero();
        m.lambda_refine_->bias.value.zero();
    }
    return m;
}

void GeosModel::validate_input(const Tensor& x) const {
    require(x.rank() == 4 && x.dim(1) == cfg_.input_channels && x.dim(2) == cfg_.input_size &&
                x.dim(3) == cfg_.input_size,
            "model input must be [n," + std::to_string(cfg_.input_channels) + "," +
                std::to_string(cfg_.input_size) + "," + std::to_string(cfg_.input_size) +
                "], got " + x.shape_str());
}

ForwardOutput GeosModel::forward_primary(const Tensor& x, bool train) {
    validate_input(x);
    ForwardOutput out;
    Tensor z = theta_features_->forward(x, train);
    // Lambda batchnorms see primary batches in train mode only when the
    // groups are coupled; under isolation the primary pass reads their
    // running statistics and leaves them untouched.
    Tensor t = lambda_trunk_->forward(z, train && !cfg_.isolation);
    Tensor r = lambda_refine_->forward(t, train && !cfg_.isolation);
    Tensor s = Tensor::zeros_like(z);
    kernels::add(z.data(), r.data(), s.data(), z.numel());
    Tensor pooled = primary_pool_.forward(s, train);
    out.primary_logits = theta_head_->forward(pooled, train);
    out.features_theta = std::move(z);
    out.features_lambda = std::move(r);
    return out;
}

void GeosModel::backward_primary(const Tensor& dlogits) {
    Tensor dpool = theta_head_->backward(dlogits);
    Tensor ds = primary_pool_.backward(dpool);
    // The sum node routes the full gradient into the backbone branch; the
    // refinement branch is only descended when isolation is off, so under
    // isolation no lambda gradient buffer is ever touched by this pass.
    Tensor dz = ds;
    if (!cfg_.isolation) {
        Tensor dt = lambda_refine_->backward(ds);
        dz.add_(lambda_trunk_->backward(dt));
    }
    theta_features_->backward(dz);
}

ForwardOutput GeosModel::forward_auxiliary(const Tensor& x, bool train) {
    validate_input(x);
    ForwardOutput out;
    // Backbone batchnorms read running statistics here: auxiliary batches are
    // scrambled or rotated and must not pollute the primary statistics.
    Tensor z = theta_features_->forward(x, false);
    Tensor t = lambda_trunk_->forward(z, train);
    Tensor pooled = pretext_pool_.forward(t, train);
    out.pretext_logits = lambda_head_->forward(pooled, train);
    out.features_theta = std::move(z);
    out.features_lambda = std::move(t);
    return out;
}

void GeosModel::backward_auxiliary(const Tensor& dlogits) {
    Tensor dpool = lambda_head_->backward(dlogits);
    Tensor dt = pretext_pool_.backward(dpool);
    Tensor dz = lambda_trunk_->backward(dt);
    // Stops at the trunk input under isolation; the backbone is descended
    // only when the groups are coupled.
    if (!cfg_.isolation) theta_features_->backward(dz);
}

std::vector<Param*> GeosModel::theta_params() {
    std::vector<Param*> out;
    theta_features_->collect_params(out);
    theta_head_->collect_params(out);
    return out;
}

std::vector<Param*> GeosModel::lambda_params() {
    std::vector<Param*> out;
    lambda_trunk_->collect_params(out);
    lambda_refine_->collect_params(out);
    lambda_head_->collect_params(out);
    return out;
}

std::vector<Param*> GeosModel::theta_feature_params() {
    std::vector<Param*> out;
    theta_features_->collect_params(out);
    return out;
}

std::vector<Param*> GeosModel::theta_head_params() {
    std::vector<Param*> out;
    theta_head_->collect_params(out);
    return out;
}

void GeosModel::zero_grad() {
    for (Param* p : theta_params()) p->zero_grad();
    for (Param* p : lambda_params()) p->zero_grad();
}

std::vector<StateRef> GeosModel::state() {
    std::vector<StateRef> out;
    theta_features_->collect_state(out);
    theta_head_->collect_state(out);
    lambda_trunk_->collect_state(out);
    lambda_refine_->collect_state(out);
    lambda_head_->collect_state(out);
    return out;
}

std::vector<ConstStateRef> GeosModel::state() const {
    std::vector<StateRef> mut = const_cast<GeosModel*>(this)->state();
    std::vector<ConstStateRef> out;
    out.reserve(mut.size());
    for (const StateRef& s : mut) out.push_back({s.name, s.tensor});
    return out;
}

namespace {

uint64_t checksum_group(const std::vector<ConstStateRef>& state, const std::string& prefix) {
    uint64_t h = 1469598103934665603ULL;
    for (const ConstStateRef& s : state) {
        if (!s.name.starts_with(prefix)) continue;
        h = fnv1a_bytes(s.name.data(), s.name.size(), h);
        h = fnv1a_bytes(s.tensor->data(),
                        static_cast<size_t>(s.tensor->numel()) * sizeof(double), h);
    }
    return h;
}

}  // namespace

uint64_t GeosModel::theta_checksum() const { return checksum_group(state(), "theta/"); }
uint64_t GeosModel::lambda_checksum() const { return checksum_group(state(), "lambda/"); }

LambdaSnapshot GeosModel::snapshot_lambda() const {
    LambdaSnapshot snap;
    for (const ConstStateRef& s : state()) {
        if (s.name.starts_with("lambda/")) snap.state.emplace_back(s.name, *s.tensor);
    }
    return snap;
}

void GeosModel::restore_lambda(const LambdaSnapshot& snap) {
    std::vector<StateRef> cur;
    for (StateRef& s : state()) {
        if (s.name.starts_with("lambda/")) cur.push_back(s);
    }
    if (cur.size() != snap.state.size())
        throw SnapshotError("snapshot holds " + std::to_string(snap.state.size()) +
                            " tensors, model has " + std::to_string(cur.size()));
    for (size_t i = 0; i < cur.size(); ++i) {
        const auto& [name, value] = snap.state[i];
        if (cur[i].name != name)
            throw SnapshotError("snapshot tensor " + name + " does not match model tensor " +
                                cur[i].name);
        if (!(cur[i].tensor->shape() == value.shape()))
            throw SnapshotError("snapshot tensor " + name + " has shape " + value.shape_str() +
                                ", model expects " + cur[i].tensor->shape_str());
        *cur[i].tensor = value;
    }
}

GeosModel GeosModel::clone() const {
    auto tf = std::unique_ptr<Sequential>(
        static_cast<Sequential*>(theta_features_->clone().release()));
    auto th = std::unique_ptr<Linear>(static_cast<Linear*>(theta_head_->clone().release()));
    auto lt =
        std::unique_ptr<Sequential>(static_cast<Sequential*>(lambda_trunk_->clone().release()));
    auto lr = std::unique_ptr<Conv2d>(static_cast<Conv2d*>(lambda_refine_->clone().release()));
    auto lh = std::unique_ptr<Linear>(static_cast<Linear*>(lambda_head_->clone().release()));
    return GeosModel(cfg_, std::move(tf), std::move(th), std::move(lt), std::move(lr),
                     std::move(lh));
}

// ------------------------------------------------------------ checkpoint

namespace {

constexpr char kCkptMagic[] = "GEOSCKPT1\n";
constexpr size_t kCkptMagicLen = 10;

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw CheckpointError("truncated checkpoint: " + path);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

nlohmann::json config_to_json(const BuildConfig& cfg, const CheckpointMeta& meta) {
    nlohmann::json j;
    j["build"] = {{"profile", cfg.profile},
                  {"input_size", cfg.input_size},
                  {"input_channels", cfg.input_channels},
                  {"num_classes", cfg.num_classes},
                  {"num_pretext", cfg.num_pretext},
                  {"isolation", cfg.isolation},
                  {"zero_init_refine", cfg.zero_init_refine},
                  {"seed", cfg.seed},
                  {"desk_channels", cfg.desk_channels}};
    j["meta"] = {{"config_hash", meta.config_hash},
                 {"seed", meta.seed},
                 {"permutation_set_hash", meta.permset_hash},
                 {"isolation", meta.isolation},
                 {"training_mode", meta.training_mode}};
    return j;
}

void json_to_config(const nlohmann::json& j, BuildConfig& cfg, CheckpointMeta& meta) {
    const auto& b = j.at("build");
    cfg.profile = b.at("profile").get<std::string>();
    cfg.input_size = b.at("input_size").get<int>();
    cfg.input_channels = b.at("input_channels").get<int>();
    cfg.num_classes = b.at("num_classes").get<int>();
    cfg.num_pretext = b.at("num_pretext").get<int>();
    cfg.isolation = b.at("isolation").get<bool>();
    cfg.zero_init_refine = b.at("zero_init_refine").get<bool>();
    cfg.seed = b.at("seed").get<uint64_t>();
    auto ch = b.at("desk_channels").get<std::vector<int>>();
    if (ch.size() != cfg.desk_channels.size())
        throw CheckpointError("desk_channels must list 4 widths");
    std::copy(ch.begin(), ch.end(), cfg.desk_channels.begin());
    const auto& m = j.at("meta");
    meta.config_hash = m.at("config_hash").get<std::string>();
    meta.seed = m.at("seed").get<uint64_t>();
    meta.permset_hash = m.at("permutation_set_hash").get<std::string>();
    meta.isolation = m.at("isolation").get<bool>();
    meta.training_mode = m.at("training_mode").get<std::string>();
}

struct ArchiveTensor {
    std::vector<int> shape;
    std::vector<double> data;
};

std::map<std::string, ArchiveTensor> read_archive(std::istream& is, const std::string& path,
                                                  nlohmann::json& meta_json) {
    char magic[kCkptMagicLen];
    is.read(magic, static_cast<std::streamsize>(kCkptMagicLen));
    if (!is || std::memcmp(magic, kCkptMagic, kCkptMagicLen) != 0)
        throw CheckpointError("not a checkpoint archive: " + path);
    uint64_t meta_len = read_u64(is, path);
    std::string meta_str(meta_len, '\0');
    is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw CheckpointError("truncated checkpoint: " + path);
    meta_json = nlohmann::json::parse(meta_str, nullptr, false);
    if (meta_json.is_discarded())
        throw CheckpointError("corrupt checkpoint metadata: " + path);

    std::map<std::string, ArchiveTensor> tensors;
    uint64_t count = read_u64(is, path);
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t name_len = read_u64(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        uint64_t rank = read_u64(is, path);
        if (!is || rank == 0 || rank > 4)
            throw CheckpointError("corrupt tensor record in checkpoint: " + path);
        ArchiveTensor t;
        int64_t numel = 1;
        for (uint64_t d = 0; d < rank; ++d) {
            uint64_t dim = read_u64(is, path);
            t.shape.push_back(static_cast<int>(dim));
            numel *= static_cast<int64_t>(dim);
        }
        t.data.resize(static_cast<size_t>(numel));
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw CheckpointError("truncated checkpoint: " + path);
        tensors.emplace(std::move(name), std::move(t));
    }
    return tensors;
}

}  // namespace

void save_checkpoint(const GeosModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    os.write(kCkptMagic, static_cast<std::streamsize>(kCkptMagicLen));
    std::string meta_str = config_to_json(model.config(), meta).dump();
    write_u64(os, meta_str.size());
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    auto state = model.state();
    write_u64(os, state.size());
    for (const ConstStateRef& s : state) {
        write_u64(os, s.name.size());
        os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
        write_u64(os, static_cast<uint64_t>(s.tensor->rank()));
        for (int d : s.tensor->shape()) write_u64(os, static_cast<uint64_t>(d));
        os.write(reinterpret_cast<const char*>(s.tensor->data()),
                 static_cast<std::streamsize>(s.tensor->numel() * sizeof(double)));
    }
    if (!os) throw CheckpointError("failed writing checkpoint: " + path.string());
}

GeosModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
    nlohmann::json meta_json;
    auto tensors = read_archive(is, path.string(), meta_json);
    BuildConfig cfg;
    CheckpointMeta meta;
    try {
        json_to_config(meta_json, cfg, meta);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint metadata missing fields in " + path.string() + ": " +
                              e.what());
    }
    GeosModel model = GeosModel::build(cfg);
    auto state = model.state();
    if (state.size() != tensors.size())
        throw CheckpointError("checkpoint " + path.string() + " holds " +
                              std::to_string(tensors.size()) + " tensors, model expects " +
                              std::to_string(state.size()));
    for (StateRef& s : state) {
        auto it = tensors.find(s.name);
        if (it == tensors.end())
            throw CheckpointError("checkpoint " + path.string() + " is missing tensor " + s.name);
        if (it->second.shape != s.tensor->shape())
            throw CheckpointError("checkpoint tensor " + s.name + " has mismatched shape");
        std::memcpy(s.tensor->data(), it->second.data.data(),
                    it->second.data.size() * sizeof(double));
    }
    if (meta_out) *meta_out = meta;
    return model;
}

void load_theta_weights(GeosModel& model, const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
    nlohmann::json meta_json;
    auto tensors = read_archive(is, path.string(), meta_json);
    for (StateRef& s : model.state()) {
        if (!s.name.starts_with("theta/")) continue;
        auto it = tensors.find(s.name);
        if (it == tensors.end())
            throw CheckpointError("pretrained weights " + path.string() + " missing tensor " +
                                  s.name);
        if (it->second.shape != s.tensor->shape())
            throw CheckpointError("pretrained tensor " + s.name + " has shape mismatch against " +
                                  s.tensor->shape_str());
        std::memcpy(s.tensor->data(), it->second.data.data(),
                    it->second.data.size() * sizeof(double));
    }
}

// ------------------------------------------------------------------ loss

LossGrad cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require(logits.rank() == 2, "cross_entropy expects [n,k] logits, got " + logits.shape_str());
    int n = logits.dim(0), k = logits.dim(1);
    require(static_cast<int>(labels.size()) == n,
            "cross_entropy got " + std::to_string(labels.size()) + " labels for batch " +
                std::to_string(n));
    LossGrad out;
    out.dlogits = Tensor::zeros_like(logits);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        int y = labels[static_cast<size_t>(i)];
        require(y >= 0 && y < k, "label " + std::to_string(y) + " out of range [0," +
                                     std::to_string(k) + ") at row " + std::to_string(i));
        double m = logits(i, 0);
        for (int j = 1; j < k; ++j) m = std::max(m, logits(i, j));
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(logits(i, j) - m);
        double lse = m + std::log(sum);
        total += lse - logits(i, y);
        for (int j = 0; j < k; ++j) {
            double p = std::exp(logits(i, j) - lse);
            out.dlogits(i, j) = (p - (j == y ? 1.0 : 0.0)) / n;
        }
    }
    out.loss = total / n;
    return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    require(logits.rank() == 2, "argmax expects [n,k] logits, got " + logits.shape_str());
    std::vector<int> out(static_cast<size_t>(logits.dim(0)));
    for (int i = 0; i < logits.dim(0); ++i) {
        int best = 0;
        for (int j = 1; j < logits.dim(1); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

Tensor batch_to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw EmptyInputError("cannot build a network batch from zero images");
    const Image& first = *images.front();
    Tensor x({static_cast<int>(images.size()), first.c, first.h, first.w});
    for (size_t i = 0; i < images.size(); ++i) {
        const Image& im = *images[i];
        require(im.h == first.h && im.w == first.w && im.c == first.c,
                "batch images must share shape");
        for (int ch = 0; ch < im.c; ++ch)
            for (int y = 0; y < im.h; ++y)
                for (int xx = 0; xx < im.w; ++xx)
                    x(static_cast<int>(i), ch, y, xx) = im.at(y, xx, ch);
    }
    return x;
}

}  // namespace geos::net
