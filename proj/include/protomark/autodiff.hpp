#ifndef PROTOMARK_AUTODIFF_HPP
#define PROTOMARK_AUTODIFF_HPP

#include <functional>
#include <vector>

#include "protomark/heatmap.hpp"

namespace protomark::ad {

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over double-precision arrays. One tape per training step:
// push parameter leaves, build the forward graph, call backward once, read
// gradients back. Gradients are exact per IEEE evaluation order, which the
// finite-difference contracts in the test suite rely on.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(const double* data, std::size_t n, std::vector<int> dims);
    Var leaf(const std::vector<double>& data, std::vector<int> dims) {
        return leaf(data.data(), data.size(), std::move(dims));
    }
    Var constant(const double* data, std::size_t n, std::vector<int> dims);
    Var constant(const std::vector<double>& data, std::vector<int> dims) {
        return constant(data.data(), data.size(), std::move(dims));
    }
    Var scalar_constant(double v) { return constant(&v, 1, {1}); }

    const std::vector<double>& val(Var v) const { return nodes_[v.id].val; }
    const std::vector<int>& dims(Var v) const { return nodes_[v.id].dims; }
    double scalar(Var v) const { return nodes_[v.id].val[0]; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    // Gradient buffer; allocated zero-filled on first access. Empty vector
    // means no gradient has flowed into the node.
    const std::vector<double>& grad_of(Var v) const { return nodes_[v.id].grad; }
    std::vector<double>& grad(Var v);

    // Reverse sweep from a scalar root (seeded with 1).
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

    // ---- array ops ----------------------------------------------------
    // x: [C,H,W], w: [OC,IC,KH,KW] (KH=KW=3), b: [OC]; zero padding 1.
    Var conv2d(Var x, Var w, Var b, int stride);
    // Per-channel normalization over the spatial plane with affine params.
    Var instance_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var gelu(Var x);
    // Half-pixel bilinear resampling of [C,H,W] to [C,out_h,out_w].
    Var upsample_bilinear(Var x, int out_h, int out_w);
    Var concat_ch(const std::vector<Var>& xs); // [C1+C2+...,H,W]

    // P[k,c] = sum_ij weights_k(i,j) F(c,i,j) / sum_ij weights_k(i,j).
    // Throws DegenerateHeatmapError when a channel has zero mass.
    Var weighted_pool(Var f, const MapStack& weights);
    // S[k,i,j] = <protos[k,:], F(:,i,j)>; protos [K,C], f [C,H,W].
    Var similarity(Var protos, Var f);

    Var add(Var a, Var b); // same shape
    Var sub(Var a, Var b);
    Var scale(Var a, double c);
    Var mask_rows(Var x, const std::vector<double>& row_mask); // x [K,D]

    Var matmul(Var a, Var b);    // [m,k] x [k,n]
    Var matmul_nt(Var a, Var b); // [m,k] x [n,k]^T -> [m,n]
    Var linear(Var x, Var w, Var b); // [n,in] x [in,out] + b
    Var softmax_rows(Var x);
    Var slice_cols(Var x, int c0, int c1); // [n, c1-c0]
    Var concat_cols(const std::vector<Var>& xs);

    // ---- scalar reductions ---------------------------------------------
    Var sum_sq(Var x);
    Var sum_sq_diff(Var a, Var b);
    // weights.size() == xs.size(); result = sum_i weights[i] * xs[i].
    Var weighted_sum_scalars(const std::vector<Var>& xs, const std::vector<double>& weights);
    Var dot_with(Var x, const std::vector<double>& coeffs); // scalar probe for tests

private:
    struct Node {
        std::vector<double> val;
        std::vector<double> grad;
        std::vector<int> dims;
        std::function<void(Tape&)> backward;
        bool requires_grad = false;
    };

    int push(std::vector<double> val, std::vector<int> dims, bool requires_grad,
             std::function<void(Tape&)> backward);
    std::vector<Node> nodes_;
};

inline std::size_t numel(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

} // namespace protomark::ad

#endif
