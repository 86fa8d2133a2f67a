#pragma once

// Decoder-only transformer whose attention logits carry an additive
// graph-structure bias. Everything is templated on the scalar type: training
// runs in float, gradient checks in double.

#include "grasp/common.hpp"
#include "grasp/tokenizer.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace grasp {

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 2;
    int d_model = 32;
    int context_length = 64;
    int vocab_size = 0;
    double bias_scale = 1.0;

    int d_k() const { return d_model / n_heads; }
    int d_ff() const { return 4 * d_model; }

    /// Throws ConfigError on inconsistent dimensions.
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct LayerParams {
    Mat<Scalar> ln1_gain, ln1_bias;
    Mat<Scalar> w_query, b_query;
    Mat<Scalar> w_key, b_key;
    Mat<Scalar> w_value, b_value;
    Mat<Scalar> w_out, b_out;
    Mat<Scalar> ln2_gain, ln2_bias;
    Mat<Scalar> w_fc, b_fc;
    Mat<Scalar> w_proj, b_proj;
};

/// All trainable tensors. Row vectors (gains, biases) are stored as 1 x n
/// matrices so every tensor can be visited uniformly.
template <typename Scalar>
struct Parameters {
    Mat<Scalar> token_embedding;     // vocab x d_model, tied with the output projection
    Mat<Scalar> position_embedding;  // context x d_model
    std::vector<LayerParams<Scalar>> layers;
    Mat<Scalar> lnf_gain, lnf_bias;

    template <typename F>
    void for_each(F&& f) {
        visit(*this, f);
    }
    template <typename F>
    void for_each(F&& f) const {
        visit(*this, f);
    }

    static Parameters zeros(const ModelConfig& config);
    /// GPT-2 style init: N(0, 0.02), residual projections scaled by 1/sqrt(2 n_layers).
    static Parameters initialized(const ModelConfig& config, std::uint64_t seed);

    template <typename Other>
    Parameters<Other> cast() const {
        Parameters<Other> out = Parameters<Other>::zeros_shaped_like(*this);
        auto src = tensors();
        auto dst = out.tensors();
        for (std::size_t i = 0; i < src.size(); ++i) {
            *dst[i] = src[i]->template cast<Other>();
        }
        return out;
    }

    template <typename Other>
    static Parameters zeros_shaped_like(const Parameters<Other>& like) {
        Parameters out;
        out.layers.resize(like.layers.size());
        auto src = like.tensors();
        auto dst = out.tensors();
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i]->setZero(src[i]->rows(), src[i]->cols());
        }
        return out;
    }

    std::vector<Mat<Scalar>*> tensors() {
        std::vector<Mat<Scalar>*> out;
        for_each([&](const std::string&, Mat<Scalar>& t) { out.push_back(&t); });
        return out;
    }
    std::vector<const Mat<Scalar>*> tensors() const {
        std::vector<const Mat<Scalar>*> out;
        for_each([&](const std::string&, const Mat<Scalar>& t) { out.push_back(&t); });
        return out;
    }

    void set_zero() {
        for_each([](const std::string&, Mat<Scalar>& t) { t.setZero(); });
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each([&](const std::string&, const Mat<Scalar>& t) { n += static_cast<std::size_t>(t.size()); });
        return n;
    }

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f) {
        f(std::string("token_embedding"), self.token_embedding);
        f(std::string("position_embedding"), self.position_embedding);
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            auto& p = self.layers[l];
            const std::string prefix = "layer" + std::to_string(l) + ".";
            f(prefix + "ln1_gain", p.ln1_gain);
            f(prefix + "ln1_bias", p.ln1_bias);
            f(prefix + "w_query", p.w_query);
            f(prefix + "b_query", p.b_query);
            f(prefix + "w_key", p.w_key);
            f(prefix + "b_key", p.b_key);
            f(prefix + "w_value", p.w_value);
            f(prefix + "b_value", p.b_value);
            f(prefix + "w_out", p.w_out);
            f(prefix + "b_out", p.b_out);
            f(prefix + "ln2_gain", p.ln2_gain);
            f(prefix + "ln2_bias", p.ln2_bias);
            f(prefix + "w_fc", p.w_fc);
            f(prefix + "b_fc", p.b_fc);
            f(prefix + "w_proj", p.w_proj);
            f(prefix + "b_proj", p.b_proj);
        }
        f(std::string("lnf_gain"), self.lnf_gain);
        f(std::string("lnf_bias"), self.lnf_bias);
    }
};

template <typename Scalar>
Parameters<Scalar> Parameters<Scalar>::zeros(const ModelConfig& config) {
    config.validate();
    const Eigen::Index d = config.d_model;
    const Eigen::Index ff = config.d_ff();
    Parameters p;
    p.token_embedding.setZero(config.vocab_size, d);
    p.position_embedding.setZero(config.context_length, d);
    p.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& layer : p.layers) {
        layer.ln1_gain.setZero(1, d);
        layer.ln1_bias.setZero(1, d);
        for (auto* w : {&layer.w_query, &layer.w_key, &layer.w_value, &layer.w_out}) {
            w->setZero(d, d);
        }
        for (auto* b : {&layer.b_query, &layer.b_key, &layer.b_value, &layer.b_out}) {
            b->setZero(1, d);
        }
        layer.ln2_gain.setZero(1, d);
        layer.ln2_bias.setZero(1, d);
        layer.w_fc.setZero(d, ff);
        layer.b_fc.setZero(1, ff);
        layer.w_proj.setZero(ff, d);
        layer.b_proj.setZero(1, d);
    }
    p.lnf_gain.setZero(1, d);
    p.lnf_bias.setZero(1, d);
    return p;
}

template <typename Scalar>
Parameters<Scalar> Parameters<Scalar>::initialized(const ModelConfig& config, std::uint64_t seed) {
    Parameters p = zeros(config);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](Mat<Scalar>& t, double stddev) {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            t.data()[i] = static_cast<Scalar>(stddev * normal(rng));
        }
    };
    constexpr double kStd = 0.02;
    const double residual_std = kStd / std::sqrt(2.0 * config.n_layers);
    fill(p.token_embedding, kStd);
    fill(p.position_embedding, kStd);
    for (auto& layer : p.layers) {
        layer.ln1_gain.setOnes();
        layer.ln2_gain.setOnes();
        fill(layer.w_query, kStd);
        fill(layer.w_key, kStd);
        fill(layer.w_value, kStd);
        fill(layer.w_out, residual_std);
        fill(layer.w_fc, kStd);
        fill(layer.w_proj, residual_std);
    }
    p.lnf_gain.setOnes();
    return p;
}

// ---------------------------------------------------------------------------
// Attention

template <typename Scalar>
struct AttentionResult {
    Mat<Scalar> weights;  // L x L, rows sum to one, masked entries exactly zero
    Mat<Scalar> output;   // L x d_v
};

/// softmax(Q K^T / sqrt(d_k) + bias) V for one head. The bias is added before
/// the causal mask, so masked entries stay masked whatever the bias holds.
/// An empty bias matrix means zero bias.
template <typename Scalar>
AttentionResult<Scalar> graph_injected_attention(const Mat<Scalar>& q, const Mat<Scalar>& k, const Mat<Scalar>& v,
                                                 const Mat<Scalar>& bias, bool causal) {
    const Eigen::Index len = q.rows();
    if (k.rows() != len || v.rows() != len || k.cols() != q.cols()) {
        throw std::invalid_argument("attention: Q/K/V shape mismatch");
    }
    if (bias.size() != 0 && (bias.rows() != len || bias.cols() != len)) {
        throw std::invalid_argument("attention: bias must be L x L");
    }
    if (!q.allFinite() || !k.allFinite() || !v.allFinite() || (bias.size() != 0 && !bias.allFinite())) {
        throw NumericError("attention: non-finite input");
    }
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
    AttentionResult<Scalar> r;
    r.weights.noalias() = (q * k.transpose()) * scale;
    if (bias.size() != 0) {
        r.weights += bias;
    }
    for (Eigen::Index i = 0; i < len; ++i) {
        const Eigen::Index visible = causal ? i + 1 : len;
        auto row = r.weights.row(i);
        const Scalar row_max = row.head(visible).maxCoeff();
        row.head(visible) = (row.head(visible).array() - row_max).exp();
        row.head(visible) /= row.head(visible).sum();
        row.tail(len - visible).setZero();
    }
    r.output.noalias() = r.weights * v;
    return r;
}

// ---------------------------------------------------------------------------
// Sequence bias

/// L x L bias: scale * node_bias[node(p)][node(q)] where both positions hold
/// node tokens, zero elsewhere.
template <typename Scalar>
Mat<Scalar> build_sequence_bias(std::span<const TokenId> ids, const Vocabulary& vocab, const Mat<Scalar>& node_bias,
                                Scalar scale) {
    const auto len = static_cast<Eigen::Index>(ids.size());
    Mat<Scalar> bias = Mat<Scalar>::Zero(len, len);
    if (scale == Scalar(0) || node_bias.size() == 0) {
        return bias;
    }
    std::vector<std::pair<Eigen::Index, Eigen::Index>> nodes;  // (position, node)
    for (Eigen::Index p = 0; p < len; ++p) {
        if (auto node = vocab.node_of_token(ids[static_cast<std::size_t>(p)])) {
            if (*node >= node_bias.rows()) {
                throw std::out_of_range("sequence bias: node outside the structural bias matrix");
            }
            nodes.emplace_back(p, *node);
        }
    }
    for (const auto& [p, a] : nodes) {
        for (const auto& [q, b] : nodes) {
            bias(p, q) = scale * node_bias(a, b);
        }
    }
    return bias;
}

// ---------------------------------------------------------------------------
// Forward pass

template <typename Scalar>
struct LayerTrace {
    Mat<Scalar> x_in;
    Mat<Scalar> ln1_hat, ln1_out;
    Vec<Scalar> ln1_rstd;
    Mat<Scalar> q, k, v;
    std::vector<Mat<Scalar>> weights;  // per head
    Mat<Scalar> attn_concat;
    Mat<Scalar> x_mid;
    Mat<Scalar> ln2_hat, ln2_out;
    Vec<Scalar> ln2_rstd;
    Mat<Scalar> fc_pre, fc_act;
};

/// Activations cached for backpropagation.
template <typename Scalar>
struct ForwardTrace {
    std::vector<TokenId> ids;
    Mat<Scalar> bias;
    std::vector<LayerTrace<Scalar>> layers;
    Mat<Scalar> x_out;
    Mat<Scalar> lnf_hat, lnf_out;
    Vec<Scalar> lnf_rstd;
    Mat<Scalar> logits;  // L x vocab
};

namespace detail {

template <typename Scalar>
constexpr Scalar kLayerNormEps = Scalar(1e-5);

template <typename Scalar>
void layer_norm(const Mat<Scalar>& x, const Mat<Scalar>& gain, const Mat<Scalar>& bias, Mat<Scalar>& hat,
                Vec<Scalar>& rstd, Mat<Scalar>& out) {
    const Eigen::Index len = x.rows();
    hat.resize(len, x.cols());
    rstd.resize(len);
    for (Eigen::Index r = 0; r < len; ++r) {
        const Scalar mean = x.row(r).mean();
        hat.row(r) = x.row(r).array() - mean;
        const Scalar var = hat.row(r).squaredNorm() / static_cast<Scalar>(x.cols());
        rstd(r) = Scalar(1) / std::sqrt(var + kLayerNormEps<Scalar>);
        hat.row(r) *= rstd(r);
    }
    out = (hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dout, const Mat<Scalar>& hat, const Vec<Scalar>& rstd,
                                const Mat<Scalar>& gain, Mat<Scalar>& dgain, Mat<Scalar>& dbias) {
    dgain += (dout.array() * hat.array()).colwise().sum().matrix();
    dbias += dout.colwise().sum();
    const Mat<Scalar> dhat = dout.array().rowwise() * gain.row(0).array();
    Mat<Scalar> dx(dout.rows(), dout.cols());
    for (Eigen::Index r = 0; r < dout.rows(); ++r) {
        const Scalar mean_dhat = dhat.row(r).mean();
        const Scalar mean_dhat_hat = dhat.row(r).cwiseProduct(hat.row(r)).mean();
        dx.row(r) = rstd(r) * (dhat.row(r).array() - mean_dhat - hat.row(r).array() * mean_dhat_hat);
    }
    return dx;
}

template <typename Scalar>
constexpr Scalar kGeluC = Scalar(0.7978845608028654);  // sqrt(2 / pi)

template <typename Scalar>
Mat<Scalar> gelu(const Mat<Scalar>& u) {
    return u.unaryExpr([](Scalar x) {
        return Scalar(0.5) * x * (Scalar(1) + std::tanh(kGeluC<Scalar> * (x + Scalar(0.044715) * x * x * x)));
    });
}

template <typename Scalar>
Mat<Scalar> gelu_grad(const Mat<Scalar>& u) {
    return u.unaryExpr([](Scalar x) {
        const Scalar t = std::tanh(kGeluC<Scalar> * (x + Scalar(0.044715) * x * x * x));
        return Scalar(0.5) * (Scalar(1) + t) +
               Scalar(0.5) * x * (Scalar(1) - t * t) * kGeluC<Scalar> * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
    });
}

}  // namespace detail

/// Pre-norm forward pass. seq_bias is L x L (already scaled) or empty for no bias.
template <typename Scalar>
ForwardTrace<Scalar> forward(const ModelConfig& config, const Parameters<Scalar>& params, std::span<const TokenId> ids,
                             const Mat<Scalar>& seq_bias) {
    const auto len = static_cast<Eigen::Index>(ids.size());
    if (len == 0 || len > config.context_length) {
        throw std::invalid_argument("forward: sequence length must lie in [1, context_length]");
    }
    const Eigen::Index dk = config.d_k();
    ForwardTrace<Scalar> tr;
    tr.ids.assign(ids.begin(), ids.end());
    tr.bias = seq_bias;

    Mat<Scalar> x(len, config.d_model);
    for (Eigen::Index t = 0; t < len; ++t) {
        const TokenId id = ids[static_cast<std::size_t>(t)];
        if (id < 0 || id >= config.vocab_size) {
            throw std::out_of_range("forward: token id outside vocabulary");
        }
        x.row(t) = params.token_embedding.row(id) + params.position_embedding.row(t);
    }

    tr.layers.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& p = params.layers[l];
        auto& lt = tr.layers[l];
        lt.x_in = x;
        detail::layer_norm(x, p.ln1_gain, p.ln1_bias, lt.ln1_hat, lt.ln1_rstd, lt.ln1_out);
        lt.q = (lt.ln1_out * p.w_query).rowwise() + p.b_query.row(0);
        lt.k = (lt.ln1_out * p.w_key).rowwise() + p.b_key.row(0);
        lt.v = (lt.ln1_out * p.w_value).rowwise() + p.b_value.row(0);
        lt.attn_concat.resize(len, config.d_model);
        lt.weights.resize(static_cast<std::size_t>(config.n_heads));
        for (int h = 0; h < config.n_heads; ++h) {
            auto r = graph_injected_attention<Scalar>(lt.q.middleCols(h * dk, dk), lt.k.middleCols(h * dk, dk),
                                                      lt.v.middleCols(h * dk, dk), seq_bias, true);
            lt.attn_concat.middleCols(h * dk, dk) = r.output;
            lt.weights[static_cast<std::size_t>(h)] = std::move(r.weights);
        }
        x.noalias() += lt.attn_concat * p.w_out;
        x.rowwise() += p.b_out.row(0);
        lt.x_mid = x;
        detail::layer_norm(x, p.ln2_gain, p.ln2_bias, lt.ln2_hat, lt.ln2_rstd, lt.ln2_out);
        lt.fc_pre = (lt.ln2_out * p.w_fc).rowwise() + p.b_fc.row(0);
        lt.fc_act = detail::gelu(lt.fc_pre);
        x.noalias() += lt.fc_act * p.w_proj;
        x.rowwise() += p.b_proj.row(0);
        if (!x.allFinite()) {
            throw NumericError("non-finite activation in layer " + std::to_string(l));
        }
    }
    tr.x_out = x;
    detail::layer_norm(x, params.lnf_gain, params.lnf_bias, tr.lnf_hat, tr.lnf_rstd, tr.lnf_out);
    tr.logits.noalias() = tr.lnf_out * params.token_embedding.transpose();
    return tr;
}

/// Accumulates dLoss/dTheta into grads given dLoss/dlogits.
template <typename Scalar>
void backward(const ModelConfig& config, const Parameters<Scalar>& params, const ForwardTrace<Scalar>& tr,
              const Mat<Scalar>& dlogits, Parameters<Scalar>& grads) {
    const auto len = static_cast<Eigen::Index>(tr.ids.size());
    const Eigen::Index dk = config.d_k();
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dk));

    grads.token_embedding.noalias() += dlogits.transpose() * tr.lnf_out;
    const Mat<Scalar> dlnf = dlogits * params.token_embedding;
    Mat<Scalar> dx =
        detail::layer_norm_backward(dlnf, tr.lnf_hat, tr.lnf_rstd, params.lnf_gain, grads.lnf_gain, grads.lnf_bias);

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& p = params.layers[li];
        const auto& lt = tr.layers[li];
        auto& g = grads.layers[li];

        // Feed-forward branch.
        g.w_proj.noalias() += lt.fc_act.transpose() * dx;
        g.b_proj += dx.colwise().sum();
        const Mat<Scalar> dfc = (dx * p.w_proj.transpose()).cwiseProduct(detail::gelu_grad(lt.fc_pre));
        g.w_fc.noalias() += lt.ln2_out.transpose() * dfc;
        g.b_fc += dfc.colwise().sum();
        const Mat<Scalar> dln2 = dfc * p.w_fc.transpose();
        dx += detail::layer_norm_backward(dln2, lt.ln2_hat, lt.ln2_rstd, p.ln2_gain, g.ln2_gain, g.ln2_bias);

        // Attention branch.
        g.w_out.noalias() += lt.attn_concat.transpose() * dx;
        g.b_out += dx.colwise().sum();
        const Mat<Scalar> dconcat = dx * p.w_out.transpose();
        Mat<Scalar> dq(len, config.d_model), dk_all(len, config.d_model), dv(len, config.d_model);
        for (int h = 0; h < config.n_heads; ++h) {
            const auto& weights = lt.weights[static_cast<std::size_t>(h)];
            const Mat<Scalar> dout = dconcat.middleCols(h * dk, dk);
            dv.middleCols(h * dk, dk).noalias() = weights.transpose() * dout;
            const Mat<Scalar> dweights = dout * lt.v.middleCols(h * dk, dk).transpose();
            const Vec<Scalar> row_dot = dweights.cwiseProduct(weights).rowwise().sum();
            const Mat<Scalar> dscores = weights.cwiseProduct(dweights.colwise() - row_dot);
            dq.middleCols(h * dk, dk).noalias() = (dscores * lt.k.middleCols(h * dk, dk)) * scale;
            dk_all.middleCols(h * dk, dk).noalias() = (dscores.transpose() * lt.q.middleCols(h * dk, dk)) * scale;
        }
        g.w_query.noalias() += lt.ln1_out.transpose() * dq;
        g.b_query += dq.colwise().sum();
        g.w_key.noalias() += lt.ln1_out.transpose() * dk_all;
        g.b_key += dk_all.colwise().sum();
        g.w_value.noalias() += lt.ln1_out.transpose() * dv;
        g.b_value += dv.colwise().sum();
        Mat<Scalar> dln1 = dq * p.w_query.transpose();
        dln1.noalias() += dk_all * p.w_key.transpose();
        dln1.noalias() += dv * p.w_value.transpose();
        dx += detail::layer_norm_backward(dln1, lt.ln1_hat, lt.ln1_rstd, p.ln1_gain, g.ln1_gain, g.ln1_bias);
    }

    for (Eigen::Index t = 0; t < len; ++t) {
        grads.token_embedding.row(tr.ids[static_cast<std::size_t>(t)]) += dx.row(t);
        grads.position_embedding.row(t) += dx.row(t);
    }
}

// ---------------------------------------------------------------------------
// Loss

/// Half-open token id range; supervised logits outside it are masked to -inf.
struct TokenRange {
    TokenId begin = 0;
    TokenId end = 0;
};

/// Sum over masked positions of -log softmax(logits)[target]. When dlogits is
/// given it receives grad_scale * d(sum)/d(logits).
template <typename Scalar>
double masked_cross_entropy(const Mat<Scalar>& logits, std::span<const TokenId> targets,
                            std::span<const std::uint8_t> mask, std::optional<TokenRange> restrict_to,
                            Scalar grad_scale, Mat<Scalar>* dlogits) {
    const Eigen::Index len = logits.rows();
    if (static_cast<Eigen::Index>(targets.size()) != len || static_cast<Eigen::Index>(mask.size()) != len) {
        throw std::invalid_argument("cross entropy: targets/mask length must match logits rows");
    }
    const TokenRange range = restrict_to.value_or(TokenRange{0, static_cast<TokenId>(logits.cols())});
    const Eigen::Index lo = range.begin;
    const Eigen::Index width = range.end - range.begin;
    if (dlogits) {
        dlogits->setZero(len, logits.cols());
    }
    double total = 0.0;
    for (Eigen::Index t = 0; t < len; ++t) {
        if (!mask[static_cast<std::size_t>(t)]) {
            continue;
        }
        const TokenId target = targets[static_cast<std::size_t>(t)];
        if (target < range.begin || target >= range.end) {
            throw std::invalid_argument("cross entropy: target outside the scored token range");
        }
        const auto row = logits.row(t).segment(lo, width);
        const Scalar row_max = row.maxCoeff();
        const Vec<Scalar> shifted = (row.array() - row_max).exp().transpose();
        const Scalar denom = shifted.sum();
        const Scalar log_prob = logits(t, target) - row_max - std::log(denom);
        total -= static_cast<double>(log_prob);
        if (dlogits) {
            auto drow = dlogits->row(t).segment(lo, width);
            drow = (shifted.transpose() / denom) * grad_scale;
            (*dlogits)(t, target) -= grad_scale;
        }
    }
    if (!std::isfinite(total)) {
        throw NumericError("non-finite loss");
    }
    return total;
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename Scalar>
struct AdamState {
    Parameters<Scalar> m;
    Parameters<Scalar> v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;

    static AdamState for_params(const Parameters<Scalar>& params) {
        AdamState s;
        s.m = Parameters<Scalar>::zeros_shaped_like(params);
        s.v = Parameters<Scalar>::zeros_shaped_like(params);
        return s;
    }
};

template <typename Scalar>
double global_norm(const Parameters<Scalar>& grads) {
    double sq = 0.0;
    grads.for_each([&](const std::string&, const Mat<Scalar>& g) { sq += g.template cast<double>().squaredNorm(); });
    return std::sqrt(sq);
}

/// Clips grads to the state's global norm and applies one Adam update.
/// Returns the pre-clip gradient norm.
template <typename Scalar>
double adam_step(Parameters<Scalar>& params, Parameters<Scalar>& grads, AdamState<Scalar>& state, double lr) {
    const double norm = global_norm(grads);
    if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient");
    }
    const double clip = norm > state.clip_norm ? state.clip_norm / norm : 1.0;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    auto ps = params.tensors();
    auto gs = grads.tensors();
    auto ms = state.m.tensors();
    auto vs = state.v.tensors();
    const auto b1 = static_cast<Scalar>(state.beta1);
    const auto b2 = static_cast<Scalar>(state.beta2);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto g = (gs[i]->array() * static_cast<Scalar>(clip));
        ms[i]->array() = b1 * ms[i]->array() + (Scalar(1) - b1) * g;
        vs[i]->array() = b2 * vs[i]->array() + (Scalar(1) - b2) * g.square();
        ps[i]->array() -= static_cast<Scalar>(lr) * (ms[i]->array() / static_cast<Scalar>(bc1)) /
                          ((vs[i]->array() / static_cast<Scalar>(bc2)).sqrt() + static_cast<Scalar>(state.eps));
    }
    return norm;
}

struct StepResult {
    double loss = 0.0;          // mean NLL over supervised positions
    std::size_t supervised = 0;
    double grad_norm = 0.0;
};

/// Loss, exact gradients and one clipped Adam step for a single traced
/// sequence. With no supervised positions the loss is 0 and nothing changes.
template <typename Scalar>
StepResult backward_and_step(const ModelConfig& config, Parameters<Scalar>& params, const ForwardTrace<Scalar>& trace,
                             std::span<const TokenId> targets, std::span<const std::uint8_t> loss_mask,
                             AdamState<Scalar>& state, double lr, std::optional<TokenRange> restrict_to = std::nullopt) {
    StepResult r;
    for (auto m : loss_mask) {
        r.supervised += m ? 1 : 0;
    }
    if (r.supervised == 0) {
        return r;
    }
    Mat<Scalar> dlogits;
    const Scalar inv = Scalar(1) / static_cast<Scalar>(r.supervised);
    r.loss = masked_cross_entropy<Scalar>(trace.logits, targets, loss_mask, restrict_to, inv, &dlogits) /
             static_cast<double>(r.supervised);
    Parameters<Scalar> grads = Parameters<Scalar>::zeros_shaped_like(params);
    backward(config, params, trace, dlogits, grads);
    r.grad_norm = adam_step(params, grads, state, lr);
    return r;
}

}  // namespace grasp
