#include "protomark/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "protomark/errors.hpp"

namespace protomark::ad {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
} // namespace

int Tape::push(std::vector<double> val, std::vector<int> dims, bool requires_grad,
               std::function<void(Tape&)> backward) {
    Node n;
    n.val = std::move(val);
    n.dims = std::move(dims);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(const double* data, std::size_t n, std::vector<int> dims) {
    if (numel(dims) != n) throw ShapeError("leaf: dims do not match buffer size");
    return {push(std::vector<double>(data, data + n), std::move(dims), true, nullptr)};
}

Var Tape::constant(const double* data, std::size_t n, std::vector<int> dims) {
    if (numel(dims) != n) throw ShapeError("constant: dims do not match buffer size");
    return {push(std::vector<double>(data, data + n), std::move(dims), false, nullptr)};
}

std::vector<double>& Tape::grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var root) {
    if (nodes_[root.id].val.size() != 1)
        throw ShapeError("backward: root must be a scalar node");
    grad(root)[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.backward || !n.requires_grad || n.grad.empty()) continue;
        n.backward(*this);
    }
}

// ---- convolution -------------------------------------------------------

Var Tape::conv2d(Var x, Var w, Var b, int stride) {
    const auto& xd = dims(x);
    const auto& wd = dims(w);
    const auto& bd = dims(b);
    if (xd.size() != 3 || wd.size() != 4 || bd.size() != 1)
        throw ShapeError("conv2d: expected x[C,H,W], w[OC,IC,KH,KW], b[OC]");
    const int C = xd[0], H = xd[1], W = xd[2];
    const int OC = wd[0], IC = wd[1], KH = wd[2], KW = wd[3];
    if (IC != C) throw ShapeError("conv2d: input channels mismatch");
    if (KH != 3 || KW != 3) throw ShapeError("conv2d: only 3x3 kernels supported");
    if (bd[0] != OC) throw ShapeError("conv2d: bias size mismatch");
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
    const int OH = (H - 1) / stride + 1;
    const int OW = (W - 1) / stride + 1;

    const std::vector<double>& xv = val(x);
    const std::vector<double>& wv = val(w);
    const std::vector<double>& bv = val(b);
    std::vector<double> out(static_cast<std::size_t>(OC) * OH * OW);

    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t oplane = static_cast<std::size_t>(OH) * OW;
    for (int oc = 0; oc < OC; ++oc) {
        double* op = out.data() + static_cast<std::size_t>(oc) * oplane;
        std::fill(op, op + oplane, bv[oc]);
        for (int ic = 0; ic < C; ++ic) {
            const double* xp = xv.data() + static_cast<std::size_t>(ic) * plane;
            const double* wp = wv.data() + (static_cast<std::size_t>(oc) * IC + ic) * 9;
            if (stride == 1) {
                for (int y = 0; y < H; ++y) {
                    double* orow = op + static_cast<std::size_t>(y) * W;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = y + ky - 1;
                        if (iy < 0 || iy >= H) continue;
                        const double* xrow = xp + static_cast<std::size_t>(iy) * W;
                        for (int kx = 0; kx < 3; ++kx) {
                            const double wk = wp[ky * 3 + kx];
                            const int x_lo = std::max(0, 1 - kx);
                            const int x_hi = std::min(W, W + 1 - kx);
                            const double* src = xrow + kx - 1;
                            for (int xx = x_lo; xx < x_hi; ++xx) orow[xx] += wk * src[xx];
                        }
                    }
                }
            } else {
                for (int oy = 0; oy < OH; ++oy) {
                    double* orow = op + static_cast<std::size_t>(oy) * OW;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * 2 + ky - 1;
                        if (iy < 0 || iy >= H) continue;
                        const double* xrow = xp + static_cast<std::size_t>(iy) * W;
                        for (int kx = 0; kx < 3; ++kx) {
                            const double wk = wp[ky * 3 + kx];
                            for (int ox = 0; ox < OW; ++ox) {
                                const int ix = ox * 2 + kx - 1;
                                if (ix < 0 || ix >= W) continue;
                                orow[ox] += wk * xrow[ix];
                            }
                        }
                    }
                }
            }
        }
    }

    const bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    const int xid = x.id, wid = w.id, bid = b.id;
    Var out_var{push(std::move(out), {OC, OH, OW}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, wid, bid, oid, C, H, W, OC, OH, OW, stride](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& xv = t.nodes_[xid].val;
            const std::vector<double>& wv = t.nodes_[wid].val;
            const std::size_t plane = static_cast<std::size_t>(H) * W;
            const std::size_t oplane = static_cast<std::size_t>(OH) * OW;

            if (t.nodes_[bid].requires_grad) {
                std::vector<double>& db = t.grad({bid});
                for (int oc = 0; oc < OC; ++oc) {
                    const double* gp = g.data() + static_cast<std::size_t>(oc) * oplane;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < oplane; ++i) acc += gp[i];
                    db[oc] += acc;
                }
            }
            if (t.nodes_[wid].requires_grad) {
                std::vector<double>& dw = t.grad({wid});
                for (int oc = 0; oc < OC; ++oc) {
                    const double* gp = g.data() + static_cast<std::size_t>(oc) * oplane;
                    for (int ic = 0; ic < C; ++ic) {
                        const double* xp = xv.data() + static_cast<std::size_t>(ic) * plane;
                        double* dwp = dw.data() + (static_cast<std::size_t>(oc) * C + ic) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            for (int kx = 0; kx < 3; ++kx) {
                                double acc = 0.0;
                                for (int oy = 0; oy < OH; ++oy) {
                                    const int iy = oy * stride + ky - 1;
                                    if (iy < 0 || iy >= H) continue;
                                    const double* grow = gp + static_cast<std::size_t>(oy) * OW;
                                    const double* xrow = xp + static_cast<std::size_t>(iy) * W;
                                    for (int ox = 0; ox < OW; ++ox) {
                                        const int ix = ox * stride + kx - 1;
                                        if (ix < 0 || ix >= W) continue;
                                        acc += grow[ox] * xrow[ix];
                                    }
                                }
                                dwp[ky * 3 + kx] += acc;
                            }
                        }
                    }
                }
            }
            if (t.nodes_[xid].requires_grad) {
                std::vector<double>& dx = t.grad({xid});
                for (int oc = 0; oc < OC; ++oc) {
                    const double* gp = g.data() + static_cast<std::size_t>(oc) * oplane;
                    for (int ic = 0; ic < C; ++ic) {
                        double* dxp = dx.data() + static_cast<std::size_t>(ic) * plane;
                        const double* wp = wv.data() + (static_cast<std::size_t>(oc) * C + ic) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            for (int kx = 0; kx < 3; ++kx) {
                                const double wk = wp[ky * 3 + kx];
                                if (wk == 0.0) continue;
                                for (int oy = 0; oy < OH; ++oy) {
                                    const int iy = oy * stride + ky - 1;
                                    if (iy < 0 || iy >= H) continue;
                                    const double* grow = gp + static_cast<std::size_t>(oy) * OW;
                                    double* dxrow = dxp + static_cast<std::size_t>(iy) * W;
                                    for (int ox = 0; ox < OW; ++ox) {
                                        const int ix = ox * stride + kx - 1;
                                        if (ix < 0 || ix >= W) continue;
                                        dxrow[ix] += wk * grow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return out_var;
}

// ---- normalization, activation ------------------------------------------

Var Tape::instance_norm(Var x, Var gamma, Var beta, double eps) {
    const auto& xd = dims(x);
    if (xd.size() != 3) throw ShapeError("instance_norm: expected x[C,H,W]");
    const int C = xd[0];
    const std::size_t N = static_cast<std::size_t>(xd[1]) * xd[2];
    if (dims(gamma) != std::vector<int>{C} || dims(beta) != std::vector<int>{C})
        throw ShapeError("instance_norm: affine parameter size mismatch");

    const std::vector<double>& xv = val(x);
    const std::vector<double>& gv = val(gamma);
    const std::vector<double>& bv = val(beta);
    std::vector<double> out(xv.size());
    auto stats = std::make_shared<std::vector<double>>(2 * static_cast<std::size_t>(C)); // mu, inv_std

    for (int c = 0; c < C; ++c) {
        const double* xp = xv.data() + static_cast<std::size_t>(c) * N;
        double mu = 0.0;
        for (std::size_t i = 0; i < N; ++i) mu += xp[i];
        mu /= static_cast<double>(N);
        double var = 0.0;
        for (std::size_t i = 0; i < N; ++i) var += (xp[i] - mu) * (xp[i] - mu);
        var /= static_cast<double>(N);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * c] = mu;
        (*stats)[2 * c + 1] = inv_std;
        double* op = out.data() + static_cast<std::size_t>(c) * N;
        const double a = gv[c] * inv_std;
        const double bb = bv[c] - a * mu;
        for (std::size_t i = 0; i < N; ++i) op[i] = a * xp[i] + bb;
    }

    const bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    const int xid = x.id, gid = gamma.id, bid = beta.id;
    Var out_var{push(std::move(out), xd, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, gid, bid, oid, C, N, stats](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& xv = t.nodes_[xid].val;
            const std::vector<double>& gv = t.nodes_[gid].val;
            const double invN = 1.0 / static_cast<double>(N);
            for (int c = 0; c < C; ++c) {
                const double mu = (*stats)[2 * c];
                const double inv_std = (*stats)[2 * c + 1];
                const double* xp = xv.data() + static_cast<std::size_t>(c) * N;
                const double* gp = g.data() + static_cast<std::size_t>(c) * N;
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const double xhat = (xp[i] - mu) * inv_std;
                    s1 += gp[i];
                    s2 += gp[i] * xhat;
                }
                if (t.nodes_[bid].requires_grad) t.grad({bid})[c] += s1;
                if (t.nodes_[gid].requires_grad) t.grad({gid})[c] += s2;
                if (t.nodes_[xid].requires_grad) {
                    double* dxp = t.grad({xid}).data() + static_cast<std::size_t>(c) * N;
                    const double a = gv[c] * inv_std;
                    for (std::size_t i = 0; i < N; ++i) {
                        const double xhat = (xp[i] - mu) * inv_std;
                        dxp[i] += a * (gp[i] - s1 * invN - xhat * s2 * invN);
                    }
                }
            }
        };
    }
    return out_var;
}

Var Tape::gelu(Var x) {
    const std::vector<double>& xv = val(x);
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
    }
    const bool rg = requires_grad(x);
    const int xid = x.id;
    Var out_var{push(std::move(out), dims(x), rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, oid](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& xv = t.nodes_[xid].val;
            std::vector<double>& dx = t.grad({xid});
            for (std::size_t i = 0; i < xv.size(); ++i) {
                const double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
                const double pdf = std::exp(-0.5 * xv[i] * xv[i]) * kInvSqrt2Pi;
                dx[i] += g[i] * (cdf + xv[i] * pdf);
            }
        };
    }
    return out_var;
}

// ---- resampling & concatenation ------------------------------------------

namespace {
// Half-pixel source coordinates with clamping; fills (i0, i1, frac) per index.
void bilinear_axis(int in_n, int out_n, std::vector<int>& i0, std::vector<int>& i1,
                   std::vector<double>& frac) {
    i0.resize(out_n);
    i1.resize(out_n);
    frac.resize(out_n);
    const double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        if (src > in_n - 1.0) src = in_n - 1.0;
        const int lo = static_cast<int>(src);
        i0[o] = lo;
        i1[o] = std::min(lo + 1, in_n - 1);
        frac[o] = src - lo;
    }
}
} // namespace

Var Tape::upsample_bilinear(Var x, int out_h, int out_w) {
    const auto& xd = dims(x);
    if (xd.size() != 3) throw ShapeError("upsample_bilinear: expected x[C,H,W]");
    const int C = xd[0], H = xd[1], W = xd[2];
    auto maps = std::make_shared<std::array<std::vector<int>, 4>>();
    auto fracs = std::make_shared<std::array<std::vector<double>, 2>>();
    bilinear_axis(H, out_h, (*maps)[0], (*maps)[1], (*fracs)[0]);
    bilinear_axis(W, out_w, (*maps)[2], (*maps)[3], (*fracs)[1]);

    const std::vector<double>& xv = val(x);
    std::vector<double> out(static_cast<std::size_t>(C) * out_h * out_w);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t oplane = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < C; ++c) {
        const double* xp = xv.data() + static_cast<std::size_t>(c) * plane;
        double* op = out.data() + static_cast<std::size_t>(c) * oplane;
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = (*maps)[0][oy], y1 = (*maps)[1][oy];
            const double fy = (*fracs)[0][oy];
            const double* r0 = xp + static_cast<std::size_t>(y0) * W;
            const double* r1 = xp + static_cast<std::size_t>(y1) * W;
            double* orow = op + static_cast<std::size_t>(oy) * out_w;
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = (*maps)[2][ox], x1 = (*maps)[3][ox];
                const double fx = (*fracs)[1][ox];
                orow[ox] = (1.0 - fy) * ((1.0 - fx) * r0[x0] + fx * r0[x1]) +
                           fy * ((1.0 - fx) * r1[x0] + fx * r1[x1]);
            }
        }
    }

    const bool rg = requires_grad(x);
    const int xid = x.id;
    Var out_var{push(std::move(out), {C, out_h, out_w}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, oid, C, H, W, out_h, out_w, maps, fracs](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            std::vector<double>& dx = t.grad({xid});
            const std::size_t plane = static_cast<std::size_t>(H) * W;
            const std::size_t oplane = static_cast<std::size_t>(out_h) * out_w;
            for (int c = 0; c < C; ++c) {
                const double* gp = g.data() + static_cast<std::size_t>(c) * oplane;
                double* dxp = dx.data() + static_cast<std::size_t>(c) * plane;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int y0 = (*maps)[0][oy], y1 = (*maps)[1][oy];
                    const double fy = (*fracs)[0][oy];
                    const double* grow = gp + static_cast<std::size_t>(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int x0 = (*maps)[2][ox], x1 = (*maps)[3][ox];
                        const double fx = (*fracs)[1][ox];
                        const double gv = grow[ox];
                        dxp[static_cast<std::size_t>(y0) * W + x0] += (1.0 - fy) * (1.0 - fx) * gv;
                        dxp[static_cast<std::size_t>(y0) * W + x1] += (1.0 - fy) * fx * gv;
                        dxp[static_cast<std::size_t>(y1) * W + x0] += fy * (1.0 - fx) * gv;
                        dxp[static_cast<std::size_t>(y1) * W + x1] += fy * fx * gv;
                    }
                }
            }
        };
    }
    return out_var;
}

Var Tape::concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_ch: empty input list");
    const int H = dims(xs[0])[1], W = dims(xs[0])[2];
    int C = 0;
    bool rg = false;
    for (Var v : xs) {
        const auto& d = dims(v);
        if (d.size() != 3 || d[1] != H || d[2] != W)
            throw ShapeError("concat_ch: spatial dims mismatch");
        C += d[0];
        rg = rg || requires_grad(v);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(C) * H * W);
    auto ids = std::make_shared<std::vector<int>>();
    auto chans = std::make_shared<std::vector<int>>();
    for (Var v : xs) {
        const std::vector<double>& xv = val(v);
        out.insert(out.end(), xv.begin(), xv.end());
        ids->push_back(v.id);
        chans->push_back(dims(v)[0]);
    }
    Var out_var{push(std::move(out), {C, H, W}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        nodes_[oid].backward = [oid, ids, chans, plane](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            std::size_t off = 0;
            for (std::size_t p = 0; p < ids->size(); ++p) {
                const std::size_t n = static_cast<std::size_t>((*chans)[p]) * plane;
                if (t.nodes_[(*ids)[p]].requires_grad) {
                    std::vector<double>& dx = t.grad({(*ids)[p]});
                    for (std::size_t i = 0; i < n; ++i) dx[i] += g[off + i];
                }
                off += n;
            }
        };
    }
    return out_var;
}

// ---- prototype ops --------------------------------------------------------

Var Tape::weighted_pool(Var f, const MapStack& weights) {
    const auto& fd = dims(f);
    if (fd.size() != 3) throw ShapeError("weighted_pool: expected f[C,H,W]");
    const int C = fd[0], H = fd[1], W = fd[2];
    if (weights.h != H || weights.w != W)
        throw ShapeError("weighted_pool: weight stack spatial dims mismatch");
    const int K = weights.k;

    // Sparse per-channel support; Gaussian targets are mostly zero.
    struct Support {
        std::vector<std::pair<int, double>> entries; // (plane index, weight / mass)
    };
    auto sup = std::make_shared<std::vector<Support>>(static_cast<std::size_t>(K));
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int k = 0; k < K; ++k) {
        const double* wp = weights.channel(k);
        double mass = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mass += wp[i];
        if (!(mass > 0.0))
            throw DegenerateHeatmapError("heatmap channel " + std::to_string(k) +
                                         " has zero mass");
        auto& entries = (*sup)[static_cast<std::size_t>(k)].entries;
        for (std::size_t i = 0; i < plane; ++i)
            if (wp[i] != 0.0) entries.emplace_back(static_cast<int>(i), wp[i] / mass);
    }

    const std::vector<double>& fv = val(f);
    std::vector<double> out(static_cast<std::size_t>(K) * C, 0.0);
    for (int k = 0; k < K; ++k) {
        const auto& entries = (*sup)[static_cast<std::size_t>(k)].entries;
        double* op = out.data() + static_cast<std::size_t>(k) * C;
        for (int c = 0; c < C; ++c) {
            const double* fp = fv.data() + static_cast<std::size_t>(c) * plane;
            double acc = 0.0;
            for (const auto& [idx, wv] : entries) acc += wv * fp[idx];
            op[c] = acc;
        }
    }

    const bool rg = requires_grad(f);
    const int fid = f.id;
    Var out_var{push(std::move(out), {K, C}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [fid, oid, K, C, plane, sup](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            std::vector<double>& df = t.grad({fid});
            for (int k = 0; k < K; ++k) {
                const auto& entries = (*sup)[static_cast<std::size_t>(k)].entries;
                const double* gp = g.data() + static_cast<std::size_t>(k) * C;
                for (int c = 0; c < C; ++c) {
                    const double gv = gp[c];
                    if (gv == 0.0) continue;
                    double* dfp = df.data() + static_cast<std::size_t>(c) * plane;
                    for (const auto& [idx, wv] : entries) dfp[idx] += gv * wv;
                }
            }
        };
    }
    return out_var;
}

Var Tape::similarity(Var protos, Var f) {
    const auto& pd = dims(protos);
    const auto& fd = dims(f);
    if (pd.size() != 2 || fd.size() != 3) throw ShapeError("similarity: expected p[K,C], f[C,H,W]");
    const int K = pd[0], C = pd[1], H = fd[1], W = fd[2];
    if (fd[0] != C) throw ShapeError("similarity: channel dims disagree (" + std::to_string(C) +
                                     " vs " + std::to_string(fd[0]) + ")");
    const std::vector<double>& pv = val(protos);
    const std::vector<double>& fv = val(f);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<double> out(static_cast<std::size_t>(K) * plane, 0.0);
    for (int k = 0; k < K; ++k) {
        double* op = out.data() + static_cast<std::size_t>(k) * plane;
        const double* prow = pv.data() + static_cast<std::size_t>(k) * C;
        for (int c = 0; c < C; ++c) {
            const double pk = prow[c];
            if (pk == 0.0) continue;
            const double* fp = fv.data() + static_cast<std::size_t>(c) * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] += pk * fp[i];
        }
    }

    const bool rg = requires_grad(protos) || requires_grad(f);
    const int pid = protos.id, fid = f.id;
    Var out_var{push(std::move(out), {K, H, W}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [pid, fid, oid, K, C, plane](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& pv = t.nodes_[pid].val;
            const std::vector<double>& fv = t.nodes_[fid].val;
            if (t.nodes_[pid].requires_grad) {
                std::vector<double>& dp = t.grad({pid});
                for (int k = 0; k < K; ++k) {
                    const double* gp = g.data() + static_cast<std::size_t>(k) * plane;
                    double* dprow = dp.data() + static_cast<std::size_t>(k) * C;
                    for (int c = 0; c < C; ++c) {
                        const double* fp = fv.data() + static_cast<std::size_t>(c) * plane;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) acc += gp[i] * fp[i];
                        dprow[c] += acc;
                    }
                }
            }
            if (t.nodes_[fid].requires_grad) {
                std::vector<double>& df = t.grad({fid});
                for (int k = 0; k < K; ++k) {
                    const double* gp = g.data() + static_cast<std::size_t>(k) * plane;
                    const double* prow = pv.data() + static_cast<std::size_t>(k) * C;
                    for (int c = 0; c < C; ++c) {
                        const double pk = prow[c];
                        if (pk == 0.0) continue;
                        double* dfp = df.data() + static_cast<std::size_t>(c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) dfp[i] += pk * gp[i];
                    }
                }
            }
        };
    }
    return out_var;
}

// ---- elementwise ------------------------------------------------------

Var Tape::add(Var a, Var b) {
    if (dims(a) != dims(b)) throw ShapeError("add: shape mismatch");
    const std::vector<double>& av = val(a);
    const std::vector<double>& bv = val(b);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    const bool rg = requires_grad(a) || requires_grad(b);
    const int aid = a.id, bid = b.id;
    Var out_var{push(std::move(out), dims(a), rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [aid, bid, oid](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            if (t.nodes_[aid].requires_grad) {
                std::vector<double>& da = t.grad({aid});
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (t.nodes_[bid].requires_grad) {
                std::vector<double>& db = t.grad({bid});
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
            }
        };
    }
    return out_var;
}

Var Tape::sub(Var a, Var b) {
    if (dims(a) != dims(b)) throw ShapeError("sub: shape mismatch");
    const std::vector<double>& av = val(a);
    const std::vector<double>& bv = val(b);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    const bool rg = requires_grad(a) || requires_grad(b);
    const int aid = a.id, bid = b.id;
    Var out_var{push(std::move(out), dims(a), rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [aid, bid, oid](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            if (t.nodes_[aid].requires_grad) {
                std::vector<double>& da = t.grad({aid});
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (t.nodes_[bid].requires_grad) {
                std::vector<double>& db = t.grad({bid});
                for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
        };
    }
    return out_var;
}

Var Tape::scale(Var a, double c) {
    const std::vector<double>& av = val(a);
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = c * av[i];
    const bool rg = requires_grad(a);
    const int aid = a.id;
    Var out_var{push(std::move(out), dims(a), rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [aid, oid, c](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            std::vector<double>& da = t.grad({aid});
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
        };
    }
    return out_var;
}

Var Tape::mask_rows(Var x, const std::vector<double>& row_mask) {
    const auto& xd = dims(x);
    if (xd.size() != 2 || static_cast<std::size_t>(xd[0]) != row_mask.size())
        throw ShapeError("mask_rows: expected x[K,D] with K row weights");
    const int K = xd[0], D = xd[1];
    const std::vector<double>& xv = val(x);
    std::vector<double> out(xv.size());
    for (int k = 0; k < K; ++k) {
        const double m = row_mask[static_cast<std::size_t>(k)];
        for (int d = 0; d < D; ++d)
            out[static_cast<std::size_t>(k) * D + d] = m * xv[static_cast<std::size_t>(k) * D + d];
    }
    const bool rg = requires_grad(x);
    const int xid = x.id;
    auto mask = std::make_shared<std::vector<double>>(row_mask);
    Var out_var{push(std::move(out), xd, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, oid, K, D, mask](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            std::vector<double>& dx = t.grad({xid});
            for (int k = 0; k < K; ++k) {
                const double m = (*mask)[static_cast<std::size_t>(k)];
                if (m == 0.0) continue;
                for (int d = 0; d < D; ++d)
                    dx[static_cast<std::size_t>(k) * D + d] += m * g[static_cast<std::size_t>(k) * D + d];
            }
        };
    }
    return out_var;
}

// ---- small dense algebra ---------------------------------------------

Var Tape::matmul(Var a, Var b) {
    const auto& ad = dims(a);
    const auto& bd = dims(b);
    if (ad.size() != 2 || bd.size() != 2 || ad[1] != bd[0]) throw ShapeError("matmul: shape mismatch");
    const int M = ad[0], K = ad[1], N = bd[1];
    const std::vector<double>& av = val(a);
    const std::vector<double>& bv = val(b);
    std::vector<double> out(static_cast<std::size_t>(M) * N, 0.0);
    for (int i = 0; i < M; ++i) {
        for (int k = 0; k < K; ++k) {
            const double aik = av[static_cast<std::size_t>(i) * K + k];
            const double* brow = bv.data() + static_cast<std::size_t>(k) * N;
            double* orow = out.data() + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) orow[j] += aik * brow[j];
        }
    }
    const bool rg = requires_grad(a) || requires_grad(b);
    const int aid = a.id, bid = b.id;
    Var out_var{push(std::move(out), {M, N}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [aid, bid, oid, M, K, N](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& av = t.nodes_[aid].val;
            const std::vector<double>& bv = t.nodes_[bid].val;
            if (t.nodes_[aid].requires_grad) {
                std::vector<double>& da = t.grad({aid});
                for (int i = 0; i < M; ++i)
                    for (int k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j < N; ++j)
                            acc += g[static_cast<std::size_t>(i) * N + j] *
                                   bv[static_cast<std::size_t>(k) * N + j];
                        da[static_cast<std::size_t>(i) * K + k] += acc;
                    }
            }
            if (t.nodes_[bid].requires_grad) {
                std::vector<double>& db = t.grad({bid});
                for (int k = 0; k < K; ++k)
                    for (int j = 0; j < N; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < M; ++i)
                            acc += av[static_cast<std::size_t>(i) * K + k] *
                                   g[static_cast<std::size_t>(i) * N + j];
                        db[static_cast<std::size_t>(k) * N + j] += acc;
                    }
            }
        };
    }
    return out_var;
}

Var Tape::matmul_nt(Var a, Var b) {
    const auto& ad = dims(a);
    const auto& bd = dims(b);
    if (ad.size() != 2 || bd.size() != 2 || ad[1] != bd[1])
        throw ShapeError("matmul_nt: shape mismatch");
    const int M = ad[0], K = ad[1], N = bd[0];
    const std::vector<double>& av = val(a);
    const std::vector<double>& bv = val(b);
    std::vector<double> out(static_cast<std::size_t>(M) * N, 0.0);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k)
                acc += av[static_cast<std::size_t>(i) * K + k] *
                       bv[static_cast<std::size_t>(j) * K + k];
            out[static_cast<std::size_t>(i) * N + j] = acc;
        }
    const bool rg = requires_grad(a) || requires_grad(b);
    const int aid = a.id, bid = b.id;
    Var out_var{push(std::move(out), {M, N}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [aid, bid, oid, M, K, N](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& av = t.nodes_[aid].val;
            const std::vector<double>& bv = t.nodes_[bid].val;
            if (t.nodes_[aid].requires_grad) {
                std::vector<double>& da = t.grad({aid});
                for (int i = 0; i < M; ++i)
                    for (int k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j < N; ++j)
                            acc += g[static_cast<std::size_t>(i) * N + j] *
                                   bv[static_cast<std::size_t>(j) * K + k];
                        da[static_cast<std::size_t>(i) * K + k] += acc;
                    }
            }
            if (t.nodes_[bid].requires_grad) {
                std::vector<double>& db = t.grad({bid});
                for (int j = 0; j < N; ++j)
                    for (int k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (int i = 0; i < M; ++i)
                            acc += g[static_cast<std::size_t>(i) * N + j] *
                                   av[static_cast<std::size_t>(i) * K + k];
                        db[static_cast<std::size_t>(j) * K + k] += acc;
                    }
            }
        };
    }
    return out_var;
}

Var Tape::linear(Var x, Var w, Var b) {
    const auto& xd = dims(x);
    const auto& wd = dims(w);
    const auto& bd = dims(b);
    if (xd.size() != 2 || wd.size() != 2 || bd.size() != 1 || xd[1] != wd[0] || wd[1] != bd[0])
        throw ShapeError("linear: shape mismatch");
    const int N = xd[0], IN = xd[1], OUT = wd[1];
    const std::vector<double>& xv = val(x);
    const std::vector<double>& wv = val(w);
    const std::vector<double>& bv = val(b);
    std::vector<double> out(static_cast<std::size_t>(N) * OUT);
    for (int i = 0; i < N; ++i) {
        double* orow = out.data() + static_cast<std::size_t>(i) * OUT;
        for (int j = 0; j < OUT; ++j) orow[j] = bv[j];
        for (int k = 0; k < IN; ++k) {
            const double xik = xv[static_cast<std::size_t>(i) * IN + k];
            const double* wrow = wv.data() + static_cast<std::size_t>(k) * OUT;
            for (int j = 0; j < OUT; ++j) orow[j] += xik * wrow[j];
        }
    }
    const bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    const int xid = x.id, wid = w.id, bid = b.id;
    Var out_var{push(std::move(out), {N, OUT}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, wid, bid, oid, N, IN, OUT](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& xv = t.nodes_[xid].val;
            const std::vector<double>& wv = t.nodes_[wid].val;
            if (t.nodes_[bid].requires_grad) {
                std::vector<double>& db = t.grad({bid});
                for (int j = 0; j < OUT; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < N; ++i) acc += g[static_cast<std::size_t>(i) * OUT + j];
                    db[j] += acc;
                }
            }
            if (t.nodes_[wid].requires_grad) {
                std::vector<double>& dw = t.grad({wid});
                for (int k = 0; k < IN; ++k)
                    for (int j = 0; j < OUT; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < N; ++i)
                            acc += xv[static_cast<std::size_t>(i) * IN + k] *
                                   g[static_cast<std::size_t>(i) * OUT + j];
                        dw[static_cast<std::size_t>(k) * OUT + j] += acc;
                    }
            }
            if (t.nodes_[xid].requires_grad) {
                std::vector<double>& dx = t.grad({xid});
                for (int i = 0; i < N; ++i)
                    for (int k = 0; k < IN; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j < OUT; ++j)
                            acc += g[static_cast<std::size_t>(i) * OUT + j] *
                                   wv[static_cast<std::size_t>(k) * OUT + j];
                        dx[static_cast<std::size_t>(i) * IN + k] += acc;
                    }
            }
        };
    }
    return out_var;
}

Var Tape::softmax_rows(Var x) {
    const auto& xd = dims(x);
    if (xd.size() != 2) throw ShapeError("softmax_rows: expected 2-d input");
    const int N = xd[0], M = xd[1];
    const std::vector<double>& xv = val(x);
    std::vector<double> out(xv.size());
    for (int i = 0; i < N; ++i) {
        const double* xrow = xv.data() + static_cast<std::size_t>(i) * M;
        double* orow = out.data() + static_cast<std::size_t>(i) * M;
        double mx = xrow[0];
        for (int j = 1; j < M; ++j) mx = std::max(mx, xrow[j]);
        double s = 0.0;
        for (int j = 0; j < M; ++j) {
            orow[j] = std::exp(xrow[j] - mx);
            s += orow[j];
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < M; ++j) orow[j] *= inv;
    }
    const bool rg = requires_grad(x);
    const int xid = x.id;
    Var out_var{push(std::move(out), xd, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, oid, N, M](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            const std::vector<double>& y = t.nodes_[oid].val;
            std::vector<double>& dx = t.grad({xid});
            for (int i = 0; i < N; ++i) {
                const double* grow = g.data() + static_cast<std::size_t>(i) * M;
                const double* yrow = y.data() + static_cast<std::size_t>(i) * M;
                double dot = 0.0;
                for (int j = 0; j < M; ++j) dot += grow[j] * yrow[j];
                double* dxrow = dx.data() + static_cast<std::size_t>(i) * M;
                for (int j = 0; j < M; ++j) dxrow[j] += yrow[j] * (grow[j] - dot);
            }
        };
    }
    return out_var;
}

Var Tape::slice_cols(Var x, int c0, int c1) {
    const auto& xd = dims(x);
    if (xd.size() != 2 || c0 < 0 || c1 > xd[1] || c0 >= c1) throw ShapeError("slice_cols: bad range");
    const int N = xd[0], M = xd[1], C = c1 - c0;
    const std::vector<double>& xv = val(x);
    std::vector<double> out(static_cast<std::size_t>(N) * C);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < C; ++j)
            out[static_cast<std::size_t>(i) * C + j] = xv[static_cast<std::size_t>(i) * M + c0 + j];
    const bool rg = requires_grad(x);
    const int xid = x.id;
    Var out_var{push(std::move(out), {N, C}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, oid, N, M, C, c0](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            std::vector<double>& dx = t.grad({xid});
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < C; ++j)
                    dx[static_cast<std::size_t>(i) * M + c0 + j] +=
                        g[static_cast<std::size_t>(i) * C + j];
        };
    }
    return out_var;
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input list");
    const int N = dims(xs[0])[0];
    int M = 0;
    bool rg = false;
    for (Var v : xs) {
        const auto& d = dims(v);
        if (d.size() != 2 || d[0] != N) throw ShapeError("concat_cols: row count mismatch");
        M += d[1];
        rg = rg || requires_grad(v);
    }
    std::vector<double> out(static_cast<std::size_t>(N) * M);
    auto ids = std::make_shared<std::vector<int>>();
    auto widths = std::make_shared<std::vector<int>>();
    int off = 0;
    for (Var v : xs) {
        const int C = dims(v)[1];
        const std::vector<double>& xv = val(v);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < C; ++j)
                out[static_cast<std::size_t>(i) * M + off + j] =
                    xv[static_cast<std::size_t>(i) * C + j];
        ids->push_back(v.id);
        widths->push_back(C);
        off += C;
    }
    Var out_var{push(std::move(out), {N, M}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [oid, ids, widths, N, M](Tape& t) {
            const std::vector<double>& g = t.nodes_[oid].grad;
            int off = 0;
            for (std::size_t p = 0; p < ids->size(); ++p) {
                const int C = (*widths)[p];
                if (t.nodes_[(*ids)[p]].requires_grad) {
                    std::vector<double>& dx = t.grad({(*ids)[p]});
                    for (int i = 0; i < N; ++i)
                        for (int j = 0; j < C; ++j)
                            dx[static_cast<std::size_t>(i) * C + j] +=
                                g[static_cast<std::size_t>(i) * M + off + j];
                }
                off += C;
            }
        };
    }
    return out_var;
}

// ---- scalar reductions --------------------------------------------------

Var Tape::sum_sq(Var x) {
    const std::vector<double>& xv = val(x);
    double acc = 0.0;
    for (double v : xv) acc += v * v;
    const bool rg = requires_grad(x);
    const int xid = x.id;
    Var out_var{push({acc}, {1}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, oid](Tape& t) {
            const double g = t.nodes_[oid].grad[0];
            const std::vector<double>& xv = t.nodes_[xid].val;
            std::vector<double>& dx = t.grad({xid});
            for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += 2.0 * xv[i] * g;
        };
    }
    return out_var;
}

Var Tape::sum_sq_diff(Var a, Var b) {
    if (dims(a) != dims(b)) throw ShapeError("sum_sq_diff: shape mismatch");
    const std::vector<double>& av = val(a);
    const std::vector<double>& bv = val(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    const bool rg = requires_grad(a) || requires_grad(b);
    const int aid = a.id, bid = b.id;
    Var out_var{push({acc}, {1}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [aid, bid, oid](Tape& t) {
            const double g = t.nodes_[oid].grad[0];
            const std::vector<double>& av = t.nodes_[aid].val;
            const std::vector<double>& bv = t.nodes_[bid].val;
            if (t.nodes_[aid].requires_grad) {
                std::vector<double>& da = t.grad({aid});
                for (std::size_t i = 0; i < av.size(); ++i)
                    da[i] += 2.0 * (av[i] - bv[i]) * g;
            }
            if (t.nodes_[bid].requires_grad) {
                std::vector<double>& db = t.grad({bid});
                for (std::size_t i = 0; i < av.size(); ++i)
                    db[i] -= 2.0 * (av[i] - bv[i]) * g;
            }
        };
    }
    return out_var;
}

Var Tape::weighted_sum_scalars(const std::vector<Var>& xs, const std::vector<double>& weights) {
    if (xs.size() != weights.size() || xs.empty())
        throw ShapeError("weighted_sum_scalars: length mismatch");
    double acc = 0.0;
    bool rg = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (val(xs[i]).size() != 1) throw ShapeError("weighted_sum_scalars: non-scalar input");
        acc += weights[i] * val(xs[i])[0];
        rg = rg || requires_grad(xs[i]);
    }
    auto ids = std::make_shared<std::vector<int>>();
    for (Var v : xs) ids->push_back(v.id);
    auto ws = std::make_shared<std::vector<double>>(weights);
    Var out_var{push({acc}, {1}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [oid, ids, ws](Tape& t) {
            const double g = t.nodes_[oid].grad[0];
            for (std::size_t i = 0; i < ids->size(); ++i) {
                if (t.nodes_[(*ids)[i]].requires_grad) t.grad({(*ids)[i]})[0] += (*ws)[i] * g;
            }
        };
    }
    return out_var;
}

Var Tape::dot_with(Var x, const std::vector<double>& coeffs) {
    const std::vector<double>& xv = val(x);
    if (xv.size() != coeffs.size()) throw ShapeError("dot_with: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += coeffs[i] * xv[i];
    const bool rg = requires_grad(x);
    const int xid = x.id;
    auto cs = std::make_shared<std::vector<double>>(coeffs);
    Var out_var{push({acc}, {1}, rg, nullptr)};
    const int oid = out_var.id;
    if (rg) {
        nodes_[oid].backward = [xid, oid, cs](Tape& t) {
            const double g = t.nodes_[oid].grad[0];
            std::vector<double>& dx = t.grad({xid});
            for (std::size_t i = 0; i < cs->size(); ++i) dx[i] += (*cs)[i] * g;
        };
    }
    return out_var;
}

} // namespace protomark::ad
