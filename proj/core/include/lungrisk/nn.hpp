#pragma once

#include "lungrisk/rng.hpp"
#include "lungrisk/types.hpp"

#include <string>
#include <vector>

namespace lungrisk {

// A named parameter tensor with its gradient accumulator. Vectors are stored
// as [n, 1]. decay marks weight matrices eligible for decoupled weight decay;
// biases, norm gains and embedding tables are left out.
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    bool decay = false;

    void setup(const std::string& name_, int rows, int cols, bool decay_ = false) {
        name = name_;
        value = Mat::Zero(rows, cols);
        grad = Mat::Zero(rows, cols);
        decay = decay_;
    }
    void zero_grad() { grad.setZero(); }
};

using ParamRefs = std::vector<Param*>;

inline long long param_count(const ParamRefs& ps) {
    long long n = 0;
    for (const Param* p : ps) n += p->value.size();
    return n;
}

inline void zero_grads(const ParamRefs& ps) {
    for (Param* p : ps) p->zero_grad();
}

// Truncated normal: resample draws outside +-2 sd.
inline void trunc_normal_init(Mat& m, Rng& rng, double sd) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double z;
        do {
            z = rng.normal();
        } while (std::abs(z) > 2.0);
        m.data()[i] = sd * z;
    }
}

// y = x * W + b with x rows as tokens. W is [in, out].
struct Linear {
    Param W;
    Param b;
    bool has_bias = true;

    void init(const std::string& prefix, int in, int out, Rng& rng, bool bias = true) {
        has_bias = bias;
        W.setup(prefix + ".W", in, out, /*decay=*/true);
        trunc_normal_init(W.value, rng, 0.02);
        if (has_bias) b.setup(prefix + ".b", out, 1);
    }

    int in_dim() const { return static_cast<int>(W.value.rows()); }
    int out_dim() const { return static_cast<int>(W.value.cols()); }

    Mat forward(const Mat& x) const {
        Mat y = x * W.value;
        if (has_bias) y.rowwise() += b.value.col(0).transpose();
        return y;
    }

    // Accumulates parameter grads, returns dL/dx.
    Mat backward(const Mat& x, const Mat& dy) {
        W.grad.noalias() += x.transpose() * dy;
        if (has_bias) b.grad.col(0) += dy.colwise().sum().transpose();
        return dy * W.value.transpose();
    }

    void collect(ParamRefs& out) {
        out.push_back(&W);
        if (has_bias) out.push_back(&b);
    }
};

// Row-wise layer normalization with learned gain/bias.
struct LayerNorm {
    Param gain;
    Param bias;
    double eps = 1e-6;

    struct Cache {
        Mat xhat;
        Vec inv_sigma;
    };

    void init(const std::string& prefix, int dim) {
        gain.setup(prefix + ".gain", dim, 1);
        gain.value.setOnes();
        bias.setup(prefix + ".bias", dim, 1);
    }

    Mat forward(const Mat& x, Cache* cache = nullptr) const {
        const Eigen::Index T = x.rows(), D = x.cols();
        Mat xhat(T, D);
        Vec inv_sigma(T);
        for (Eigen::Index t = 0; t < T; ++t) {
            double mu = x.row(t).mean();
            double var = (x.row(t).array() - mu).square().sum() / D;
            double is = 1.0 / std::sqrt(var + eps);
            xhat.row(t) = (x.row(t).array() - mu) * is;
            inv_sigma(t) = is;
        }
        Mat y = (xhat.array().rowwise() * gain.value.col(0).transpose().array()).rowwise() +
                bias.value.col(0).transpose().array();
        if (cache) {
            cache->xhat = std::move(xhat);
            cache->inv_sigma = std::move(inv_sigma);
        }
        return y;
    }

    Mat backward(const Cache& c, const Mat& dy) {
        const Eigen::Index T = dy.rows(), D = dy.cols();
        gain.grad.col(0) += (dy.array() * c.xhat.array()).colwise().sum().transpose();
        bias.grad.col(0) += dy.colwise().sum().transpose();
        Mat dx(T, D);
        for (Eigen::Index t = 0; t < T; ++t) {
            Eigen::ArrayXd dyh = dy.row(t).transpose().array() * gain.value.col(0).array();
            double m1 = dyh.mean();
            double m2 = (dyh * c.xhat.row(t).transpose().array()).mean();
            dx.row(t) =
                ((dyh - m1 - c.xhat.row(t).transpose().array() * m2) * c.inv_sigma(t)).transpose();
        }
        return dx;
    }

    void collect(ParamRefs& out) {
        out.push_back(&gain);
        out.push_back(&bias);
    }
};

// Row-wise softmax, numerically stabilized.
inline Mat softmax_rows(const Mat& s) {
    Mat a(s.rows(), s.cols());
    for (Eigen::Index t = 0; t < s.rows(); ++t) {
        Eigen::ArrayXd e = (s.row(t).array() - s.row(t).maxCoeff()).exp();
        a.row(t) = (e / e.sum()).transpose();
    }
    return a;
}

// Given attn = softmax(s) and dL/dattn, returns dL/ds.
inline Mat softmax_rows_backward(const Mat& attn, const Mat& dattn) {
    Mat ds(attn.rows(), attn.cols());
    for (Eigen::Index t = 0; t < attn.rows(); ++t) {
        double dot = attn.row(t).dot(dattn.row(t));
        ds.row(t) = attn.row(t).array() * (dattn.row(t).array() - dot);
    }
    return ds;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

}  // namespace lungrisk
