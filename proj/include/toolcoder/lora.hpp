#pragma once

// Low-rank adapter arithmetic, row-vector convention: h <- h + s * x W_down W_up.

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace toolcoder {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct LoraAdapter {
    Matrix down;  // d x r
    Matrix up;    // r x k
    double scale = 1.0;

    Eigen::Index in_dim() const { return down.rows(); }
    Eigen::Index rank() const { return down.cols(); }
    Eigen::Index out_dim() const { return up.cols(); }

    void validate() const {
        if (down.cols() < 1) throw std::invalid_argument("lora: rank must be >= 1");
        if (up.rows() != down.cols())
            throw std::invalid_argument("lora: W_up has " + std::to_string(up.rows()) + " rows, expected rank " +
                                        std::to_string(down.cols()));
        if (down.rows() < 1 || up.cols() < 1) throw std::invalid_argument("lora: empty projection");
        if (!(scale >= 1.0)) throw std::invalid_argument("lora: scale must be >= 1");
    }

    /// Proper low-rank update: r <= min(d, k).
    bool is_low_rank() const { return rank() <= std::min(in_dim(), out_dim()); }

    /// Dense s * W_down W_up (d x k).
    Matrix delta() const { return scale * (down * up); }
};

/// h + s * (x W_down) W_up, through the r-dimensional intermediate.
inline RowVector lora_update(const RowVector& h, const RowVector& x, const LoraAdapter& a) {
    a.validate();
    if (x.size() != a.in_dim())
        throw std::invalid_argument("lora_update: x has length " + std::to_string(x.size()) + ", expected d = " +
                                    std::to_string(a.in_dim()));
    if (h.size() != a.out_dim())
        throw std::invalid_argument("lora_update: h has length " + std::to_string(h.size()) + ", expected k = " +
                                    std::to_string(a.out_dim()));
    const RowVector low = x * a.down;  // 1 x r
    return h + a.scale * (low * a.up);
}

/// d/dW_down of |lora_update(h, x, a)|^2, which is 2 s x^T (y W_up^T).
inline Matrix lora_grad_down_sq_norm(const RowVector& h, const RowVector& x, const LoraAdapter& a) {
    const RowVector y = lora_update(h, x, a);
    return 2.0 * a.scale * x.transpose() * (y * a.up.transpose());
}

struct LoraBudget {
    std::int64_t n_layers = 0;
    std::int64_t adapted_matrices_per_layer = 2;  // query and value projections
    std::int64_t d_model = 0;
    std::int64_t rank = 0;
    double total_params = 0.0;

    void validate() const {
        if (n_layers <= 0 || adapted_matrices_per_layer <= 0 || d_model <= 0 || rank <= 0 || !(total_params > 0.0))
            throw std::invalid_argument("lora budget: all fields must be positive");
    }
};

struct LoraParamCount {
    std::int64_t trainable = 0;
    double fraction = 0.0;
};

/// Each adapted d_model x d_model projection trains rank * (d_model + d_model) weights.
inline LoraParamCount lora_param_count(const LoraBudget& b) {
    b.validate();
    const std::int64_t trainable = b.n_layers * b.adapted_matrices_per_layer * b.rank * (b.d_model + b.d_model);
    return {trainable, static_cast<double>(trainable) / b.total_params};
}

}  // namespace toolcoder
