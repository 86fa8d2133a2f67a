#pragma once

// Loop-based reference transformer used as a test oracle. Shares nothing with
// the Eigen implementation except the parameter layout.

#include "grasp/model.hpp"

#include <cmath>
#include <vector>

namespace reference {

using Table = std::vector<std::vector<double>>;

inline Table zeros(std::size_t rows, std::size_t cols) {
    return Table(rows, std::vector<double>(cols, 0.0));
}

// y = x W + b, W stored as a dense parameter matrix, b as a 1 x n row.
inline Table affine(const Table& x, const grasp::Mat<double>& w, const grasp::Mat<double>& b) {
    Table y = zeros(x.size(), static_cast<std::size_t>(w.cols()));
    for (std::size_t t = 0; t < x.size(); ++t) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            double acc = b(0, j);
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                acc += x[t][static_cast<std::size_t>(i)] * w(i, j);
            }
            y[t][static_cast<std::size_t>(j)] = acc;
        }
    }
    return y;
}

inline Table layer_norm(const Table& x, const grasp::Mat<double>& gain, const grasp::Mat<double>& bias) {
    Table y = x;
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double n = static_cast<double>(x[t].size());
        double mean = 0.0;
        for (double v : x[t]) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : x[t]) {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        for (std::size_t j = 0; j < x[t].size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            y[t][j] = (x[t][j] - mean) / std::sqrt(var + 1e-5) * gain(0, jj) + bias(0, jj);
        }
    }
    return y;
}

inline double gelu(double u) {
    return 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
}

/// Causal multi-head attention; bias (L x L, may be empty) is added to every head.
inline Table attention(const Table& q, const Table& k, const Table& v, int n_heads, const Table& bias) {
    const std::size_t len = q.size();
    const std::size_t d = q[0].size();
    const std::size_t dk = d / static_cast<std::size_t>(n_heads);
    Table out = zeros(len, d);
    for (std::size_t h = 0; h < static_cast<std::size_t>(n_heads); ++h) {
        for (std::size_t i = 0; i < len; ++i) {
            std::vector<double> score(i + 1);
            double mx = -1e300;
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dk; ++c) {
                    s += q[i][h * dk + c] * k[j][h * dk + c];
                }
                s /= std::sqrt(static_cast<double>(dk));
                if (!bias.empty()) {
                    s += bias[i][j];
                }
                score[j] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (auto& s : score) {
                s = std::exp(s - mx);
                z += s;
            }
            for (std::size_t j = 0; j <= i; ++j) {
                for (std::size_t c = 0; c < dk; ++c) {
                    out[i][h * dk + c] += score[j] / z * v[j][h * dk + c];
                }
            }
        }
    }
    return out;
}

inline void add_into(Table& x, const Table& y) {
    for (std::size_t t = 0; t < x.size(); ++t) {
        for (std::size_t j = 0; j < x[t].size(); ++j) {
            x[t][j] += y[t][j];
        }
    }
}

/// Logits (L x V) of the pre-norm decoder with tied output embedding.
inline Table forward(const grasp::ModelConfig& config, const grasp::Parameters<double>& p,
                     const std::vector<grasp::TokenId>& ids, const Table& bias = {}) {
    const std::size_t len = ids.size();
    const auto d = static_cast<std::size_t>(config.d_model);
    Table x = zeros(len, d);
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            x[t][j] = p.token_embedding(ids[t], jj) + p.position_embedding(static_cast<Eigen::Index>(t), jj);
        }
    }
    for (const auto& layer : p.layers) {
        const Table h = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
        const Table a = attention(affine(h, layer.w_query, layer.b_query), affine(h, layer.w_key, layer.b_key),
                                  affine(h, layer.w_value, layer.b_value), config.n_heads, bias);
        add_into(x, affine(a, layer.w_out, layer.b_out));
        Table f = affine(layer_norm(x, layer.ln2_gain, layer.ln2_bias), layer.w_fc, layer.b_fc);
        for (auto& row : f) {
            for (auto& v : row) {
                v = gelu(v);
            }
        }
        add_into(x, affine(f, layer.w_proj, layer.b_proj));
    }
    const Table h = layer_norm(x, p.lnf_gain, p.lnf_bias);
    Table logits = zeros(len, static_cast<std::size_t>(config.vocab_size));
    for (std::size_t t = 0; t < len; ++t) {
        for (Eigen::Index v = 0; v < config.vocab_size; ++v) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                acc += h[t][j] * p.token_embedding(v, static_cast<Eigen::Index>(j));
            }
            logits[t][static_cast<std::size_t>(v)] = acc;
        }
    }
    return logits;
}

inline Table to_table(const grasp::Mat<double>& m) {
    Table t = zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            t[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
        }
    }
    return t;
}

inline double max_abs_diff(const grasp::Mat<double>& a, const Table& b) {
    double worst = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            worst = std::max(worst, std::abs(a(r, c) - b[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
        }
    }
    return worst;
}

}  // namespace reference
