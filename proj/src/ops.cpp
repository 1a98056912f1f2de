#include "lease/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lease {

namespace {

Graph& same_graph(const char* op, Var a, Var b) {
    if (a.graph() == nullptr || a.graph() != b.graph())
        throw ShapeError(std::string(op) + ": operands belong to different graphs");
    return *a.graph();
}

void check_input(const char* op, const Tensor& t) { require_finite(op, t); }

void require_rank(const char* op, const Tensor& t, int rank) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + t.shape_str());
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Var add(Var a, Var b) {
    Graph& g = same_graph("add", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_input("add", av);
    check_input("add", bv);

    bool bias_bcast = av.rank() == 2 && bv.rank() == 1 && bv.dim(0) == av.dim(1);
    if (!bias_bcast) require_same_shape("add", av, bv);

    Tensor out = av;
    if (bias_bcast) {
        for (int64_t r = 0; r < av.dim(0); ++r)
            for (int64_t c = 0; c < av.dim(1); ++c) out[out.at2(r, c)] += bv[c];
    } else {
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    }

    int aid = a.id(), bid = b.id();
    return g.emplace("add", {aid, bid}, std::move(out), [=](Graph& gr, const Tensor& gout) {
        gr.accumulate(aid, gout);
        if (!bias_bcast) {
            gr.accumulate(bid, gout);
        } else {
            Tensor gb({gout.dim(1)});
            for (int64_t r = 0; r < gout.dim(0); ++r)
                for (int64_t c = 0; c < gout.dim(1); ++c) gb[c] += gout[gout.at2(r, c)];
            gr.accumulate(bid, gb);
        }
    });
}

Var sub(Var a, Var b) {
    Graph& g = same_graph("sub", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_input("sub", av);
    check_input("sub", bv);
    require_same_shape("sub", av, bv);

    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];

    int aid = a.id(), bid = b.id();
    return g.emplace("sub", {aid, bid}, std::move(out), [=](Graph& gr, const Tensor& gout) {
        gr.accumulate(aid, gout);
        Tensor gb = gout;
        for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = -gb[i];
        gr.accumulate(bid, gb);
    });
}

Var mul(Var a, Var b) {
    Graph& g = same_graph("mul", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_input("mul", av);
    check_input("mul", bv);

    bool a_scalar = av.is_scalar() && !bv.is_scalar();
    bool b_scalar = bv.is_scalar() && !av.is_scalar();
    if (!a_scalar && !b_scalar) require_same_shape("mul", av, bv);

    Tensor out = a_scalar ? bv : av;
    if (a_scalar) {
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= av[0];
    } else if (b_scalar) {
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[0];
    } else {
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    }

    int aid = a.id(), bid = b.id();
    // Copies of the operand values are captured; parents may be large, but traces
    // are short-lived and per-iteration.
    Tensor ac = av, bc = bv;
    return g.emplace("mul", {aid, bid}, std::move(out),
                     [=, ac = std::move(ac), bc = std::move(bc)](Graph& gr, const Tensor& gout) {
                         if (a_scalar) {
                             double s = 0.0;
                             for (int64_t i = 0; i < gout.numel(); ++i) s += gout[i] * bc[i];
                             gr.accumulate(aid, Tensor::scalar(s));
                             Tensor gb = gout;
                             for (int64_t i = 0; i < gb.numel(); ++i) gb[i] *= ac[0];
                             gr.accumulate(bid, gb);
                         } else if (b_scalar) {
                             Tensor ga = gout;
                             for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= bc[0];
                             gr.accumulate(aid, ga);
                             double s = 0.0;
                             for (int64_t i = 0; i < gout.numel(); ++i) s += gout[i] * ac[i];
                             gr.accumulate(bid, Tensor::scalar(s));
                         } else {
                             Tensor ga = gout, gb = gout;
                             for (int64_t i = 0; i < ga.numel(); ++i) {
                                 ga[i] *= bc[i];
                                 gb[i] *= ac[i];
                             }
                             gr.accumulate(aid, ga);
                             gr.accumulate(bid, gb);
                         }
                     });
}

Var scale(Var a, double s) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("scale", av);
    if (!std::isfinite(s)) throw NumericError("scale: non-finite scalar");

    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;

    int aid = a.id();
    return g.emplace("scale", {aid}, std::move(out), [=](Graph& gr, const Tensor& gout) {
        Tensor ga = gout;
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= s;
        gr.accumulate(aid, ga);
    });
}

Var matmul(Var a, Var b) {
    Graph& g = same_graph("matmul", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_input("matmul", av);
    check_input("matmul", bv);
    require_rank("matmul", av, 2);
    require_rank("matmul", bv, 2);
    if (av.dim(1) != bv.dim(0))
        throw ShapeError("matmul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());

    int64_t M = av.dim(0), K = av.dim(1), N = bv.dim(1);
    Tensor out({M, N});
    for (int64_t i = 0; i < M; ++i)
        for (int64_t k = 0; k < K; ++k) {
            double aik = av[av.at2(i, k)];
            for (int64_t j = 0; j < N; ++j) out[out.at2(i, j)] += aik * bv[bv.at2(k, j)];
        }

    int aid = a.id(), bid = b.id();
    Tensor ac = av, bc = bv;
    return g.emplace("matmul", {aid, bid}, std::move(out),
                     [=, ac = std::move(ac), bc = std::move(bc)](Graph& gr, const Tensor& gout) {
                         Tensor ga({M, K});
                         for (int64_t i = 0; i < M; ++i)
                             for (int64_t j = 0; j < N; ++j) {
                                 double go = gout[gout.at2(i, j)];
                                 for (int64_t k = 0; k < K; ++k)
                                     ga[ga.at2(i, k)] += go * bc[bc.at2(k, j)];
                             }
                         gr.accumulate(aid, ga);
                         Tensor gb({K, N});
                         for (int64_t i = 0; i < M; ++i)
                             for (int64_t k = 0; k < K; ++k) {
                                 double aik = ac[ac.at2(i, k)];
                                 for (int64_t j = 0; j < N; ++j)
                                     gb[gb.at2(k, j)] += aik * gout[gout.at2(i, j)];
                             }
                         gr.accumulate(bid, gb);
                     });
}

Var conv2d(Var x, Var k, int stride, int pad) {
    Graph& g = same_graph("conv2d", x, k);
    const Tensor& xv = x.value();
    const Tensor& kv = k.value();
    check_input("conv2d", xv);
    check_input("conv2d", kv);
    require_rank("conv2d", xv, 4);
    require_rank("conv2d", kv, 4);
    if (stride <= 0 || pad < 0) throw ShapeError("conv2d: stride must be positive, pad nonnegative");
    if (xv.dim(1) != kv.dim(1))
        throw ShapeError("conv2d: channel mismatch " + xv.shape_str() + " vs " + kv.shape_str());

    int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int64_t Cout = kv.dim(0), KH = kv.dim(2), KW = kv.dim(3);
    int64_t OH = (H + 2 * pad - KH) / stride + 1;
    int64_t OW = (W + 2 * pad - KW) / stride + 1;
    if (OH <= 0 || OW <= 0)
        throw ShapeError("conv2d: kernel " + kv.shape_str() + " too large for input " +
                         xv.shape_str());

    Tensor out({N, Cout, OH, OW});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t oh = 0; oh < OH; ++oh)
                for (int64_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t kh = 0; kh < KH; ++kh) {
                            int64_t ih = oh * stride + kh - pad;
                            if (ih < 0 || ih >= H) continue;
                            for (int64_t kw = 0; kw < KW; ++kw) {
                                int64_t iw = ow * stride + kw - pad;
                                if (iw < 0 || iw >= W) continue;
                                acc += xv[xv.at4(n, ci, ih, iw)] * kv[kv.at4(co, ci, kh, kw)];
                            }
                        }
                    out[out.at4(n, co, oh, ow)] = acc;
                }

    int xid = x.id(), kid = k.id();
    Tensor xc = xv, kc = kv;
    return g.emplace(
        "conv2d", {xid, kid}, std::move(out),
        [=, xc = std::move(xc), kc = std::move(kc)](Graph& gr, const Tensor& gout) {
            bool need_x = gr.requires_grad(xid);
            bool need_k = gr.requires_grad(kid);
            Tensor gx({N, Cin, H, W});
            Tensor gk({Cout, Cin, KH, KW});
            for (int64_t n = 0; n < N; ++n)
                for (int64_t co = 0; co < Cout; ++co)
                    for (int64_t oh = 0; oh < OH; ++oh)
                        for (int64_t ow = 0; ow < OW; ++ow) {
                            double go = gout[gout.at4(n, co, oh, ow)];
                            if (go == 0.0) continue;
                            for (int64_t ci = 0; ci < Cin; ++ci)
                                for (int64_t kh = 0; kh < KH; ++kh) {
                                    int64_t ih = oh * stride + kh - pad;
                                    if (ih < 0 || ih >= H) continue;
                                    for (int64_t kw = 0; kw < KW; ++kw) {
                                        int64_t iw = ow * stride + kw - pad;
                                        if (iw < 0 || iw >= W) continue;
                                        if (need_x)
                                            gx[gx.at4(n, ci, ih, iw)] +=
                                                go * kc[kc.at4(co, ci, kh, kw)];
                                        if (need_k)
                                            gk[gk.at4(co, ci, kh, kw)] +=
                                                go * xc[xc.at4(n, ci, ih, iw)];
                                    }
                                }
                        }
            if (need_x) gr.accumulate(xid, gx);
            if (need_k) gr.accumulate(kid, gk);
        });
}

Var relu(Var a) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("relu", av);

    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, out[i]);

    int aid = a.id();
    Tensor ac = av;
    return g.emplace("relu", {aid}, std::move(out),
                     [=, ac = std::move(ac)](Graph& gr, const Tensor& gout) {
                         Tensor ga = gout;
                         for (int64_t i = 0; i < ga.numel(); ++i)
                             if (ac[i] <= 0.0) ga[i] = 0.0;
                         gr.accumulate(aid, ga);
                     });
}

Var avg_pool3(Var a) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("avg_pool3", av);
    require_rank("avg_pool3", av, 4);

    int64_t N = av.dim(0), C = av.dim(1), H = av.dim(2), W = av.dim(3);
    Tensor out({N, C, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    double acc = 0.0;
                    for (int64_t dh = -1; dh <= 1; ++dh)
                        for (int64_t dw = -1; dw <= 1; ++dw) {
                            int64_t ih = h + dh, iw = w + dw;
                            if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                            acc += av[av.at4(n, c, ih, iw)];
                        }
                    out[out.at4(n, c, h, w)] = acc / 9.0;
                }

    int aid = a.id();
    return g.emplace("avg_pool3", {aid}, std::move(out), [=](Graph& gr, const Tensor& gout) {
        Tensor ga({N, C, H, W});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t w = 0; w < W; ++w) {
                        double go = gout[gout.at4(n, c, h, w)] / 9.0;
                        for (int64_t dh = -1; dh <= 1; ++dh)
                            for (int64_t dw = -1; dw <= 1; ++dw) {
                                int64_t ih = h + dh, iw = w + dw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                ga[ga.at4(n, c, ih, iw)] += go;
                            }
                    }
        gr.accumulate(aid, ga);
    });
}

Var max_pool3(Var a) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("max_pool3", av);
    require_rank("max_pool3", av, 4);

    int64_t N = av.dim(0), C = av.dim(1), H = av.dim(2), W = av.dim(3);
    Tensor out({N, C, H, W});
    std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    double best = -std::numeric_limits<double>::infinity();
                    int64_t best_idx = -1;
                    for (int64_t dh = -1; dh <= 1; ++dh)
                        for (int64_t dw = -1; dw <= 1; ++dw) {
                            int64_t ih = h + dh, iw = w + dw;
                            if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                            int64_t idx = av.at4(n, c, ih, iw);
                            if (av[idx] > best || (av[idx] == best && idx < best_idx)) {
                                best = av[idx];
                                best_idx = idx;
                            }
                        }
                    int64_t o = out.at4(n, c, h, w);
                    out[o] = best;
                    argmax[static_cast<size_t>(o)] = best_idx;
                }

    int aid = a.id();
    return g.emplace("max_pool3", {aid}, std::move(out),
                     [=, argmax = std::move(argmax)](Graph& gr, const Tensor& gout) {
                         Tensor ga({N, C, H, W});
                         for (int64_t i = 0; i < gout.numel(); ++i)
                             ga[argmax[static_cast<size_t>(i)]] += gout[i];
                         gr.accumulate(aid, ga);
                     });
}

Var global_avg_pool(Var a) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("global_avg_pool", av);
    require_rank("global_avg_pool", av, 4);

    int64_t N = av.dim(0), C = av.dim(1), H = av.dim(2), W = av.dim(3);
    double inv = 1.0 / static_cast<double>(H * W);
    Tensor out({N, C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) acc += av[av.at4(n, c, h, w)];
            out[out.at2(n, c)] = acc * inv;
        }

    int aid = a.id();
    return g.emplace("global_avg_pool", {aid}, std::move(out),
                     [=](Graph& gr, const Tensor& gout) {
                         Tensor ga({N, C, H, W});
                         for (int64_t n = 0; n < N; ++n)
                             for (int64_t c = 0; c < C; ++c) {
                                 double go = gout[gout.at2(n, c)] * inv;
                                 for (int64_t h = 0; h < H; ++h)
                                     for (int64_t w = 0; w < W; ++w)
                                         ga[ga.at4(n, c, h, w)] = go;
                             }
                         gr.accumulate(aid, ga);
                     });
}

Var sum(Var a) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("sum", av);

    double acc = 0.0;
    for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];

    int aid = a.id();
    std::vector<int64_t> shape = av.shape();
    return g.emplace("sum", {aid}, Tensor::scalar(acc),
                     [=, shape = std::move(shape)](Graph& gr, const Tensor& gout) {
                         gr.accumulate(aid, Tensor::full(shape, gout[0]));
                     });
}

Var softmax_rows(Var a) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("softmax_rows", av);
    require_rank("softmax_rows", av, 2);

    int64_t R = av.dim(0), C = av.dim(1);
    Tensor out({R, C});
    for (int64_t r = 0; r < R; ++r) {
        double m = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < C; ++c) m = std::max(m, av[av.at2(r, c)]);
        double z = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            double e = std::exp(av[av.at2(r, c)] - m);
            out[out.at2(r, c)] = e;
            z += e;
        }
        for (int64_t c = 0; c < C; ++c) out[out.at2(r, c)] /= z;
    }

    int aid = a.id();
    Tensor sm = out;
    return g.emplace("softmax_rows", {aid}, std::move(out),
                     [=, sm = std::move(sm)](Graph& gr, const Tensor& gout) {
                         Tensor ga({R, C});
                         for (int64_t r = 0; r < R; ++r) {
                             double dot = 0.0;
                             for (int64_t c = 0; c < C; ++c)
                                 dot += gout[gout.at2(r, c)] * sm[sm.at2(r, c)];
                             for (int64_t c = 0; c < C; ++c)
                                 ga[ga.at2(r, c)] =
                                     sm[sm.at2(r, c)] * (gout[gout.at2(r, c)] - dot);
                         }
                         gr.accumulate(aid, ga);
                     });
}

Var cross_entropy(Var pred_probs, Var target_probs) {
    Graph& g = same_graph("cross_entropy", pred_probs, target_probs);
    const Tensor& pv = pred_probs.value();
    const Tensor& tv = target_probs.value();
    check_input("cross_entropy", pv);
    check_input("cross_entropy", tv);
    require_rank("cross_entropy", pv, 2);
    require_same_shape("cross_entropy", pv, tv);

    int64_t R = pv.dim(0), C = pv.dim(1);
    for (int64_t r = 0; r < R; ++r) {
        double sp = 0.0, st = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            sp += pv[pv.at2(r, c)];
            st += tv[tv.at2(r, c)];
        }
        if (std::abs(sp - 1.0) > 1e-9 || std::abs(st - 1.0) > 1e-9)
            throw NumericError("cross_entropy: row " + std::to_string(r) +
                               " is not normalized (pred sum " + std::to_string(sp) +
                               ", target sum " + std::to_string(st) + ")");
    }

    double loss = 0.0;
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) {
            double t = tv[tv.at2(r, c)];
            if (t == 0.0) continue;  // 0 * log(0) treated as 0
            loss -= t * std::log(std::max(pv[pv.at2(r, c)], kLogFloor));
        }
    loss /= static_cast<double>(R);

    int pid = pred_probs.id(), tid = target_probs.id();
    Tensor pc = pv, tc = tv;
    return g.emplace("cross_entropy", {pid, tid}, Tensor::scalar(loss),
                     [=, pc = std::move(pc), tc = std::move(tc)](Graph& gr, const Tensor& gout) {
                         double go = gout[0] / static_cast<double>(R);
                         Tensor gp({R, C}), gt({R, C});
                         for (int64_t r = 0; r < R; ++r)
                             for (int64_t c = 0; c < C; ++c) {
                                 int64_t i = pc.at2(r, c);
                                 double p = pc[i], t = tc[i];
                                 if (t != 0.0 && p > kLogFloor) gp[i] = -go * t / p;
                                 gt[i] = -go * std::log(std::max(p, kLogFloor));
                             }
                         gr.accumulate(pid, gp);
                         gr.accumulate(tid, gt);
                     });
}

Var select_row(Var a, int64_t r) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("select_row", av);
    require_rank("select_row", av, 2);
    if (r < 0 || r >= av.dim(0))
        throw ShapeError("select_row: row " + std::to_string(r) + " out of range for " +
                         av.shape_str());

    int64_t C = av.dim(1);
    Tensor out({1, C});
    for (int64_t c = 0; c < C; ++c) out[c] = av[av.at2(r, c)];

    int aid = a.id();
    int64_t R = av.dim(0);
    return g.emplace("select_row", {aid}, std::move(out), [=](Graph& gr, const Tensor& gout) {
        Tensor ga({R, C});
        for (int64_t c = 0; c < C; ++c) ga[ga.at2(r, c)] = gout[c];
        gr.accumulate(aid, ga);
    });
}

Var select_elem(Var a, int64_t r, int64_t c) {
    Graph& g = *a.graph();
    const Tensor& av = a.value();
    check_input("select_elem", av);
    require_rank("select_elem", av, 2);
    if (r < 0 || r >= av.dim(0) || c < 0 || c >= av.dim(1))
        throw ShapeError("select_elem: index out of range for " + av.shape_str());

    int aid = a.id();
    int64_t R = av.dim(0), C = av.dim(1);
    return g.emplace("select_elem", {aid}, Tensor::scalar(av[av.at2(r, c)]),
                     [=](Graph& gr, const Tensor& gout) {
                         Tensor ga({R, C});
                         ga[ga.at2(r, c)] = gout[0];
                         gr.accumulate(aid, ga);
                     });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty input list");
    Graph& g = *xs[0].graph();
    int64_t N = xs[0].value().dim(0), H = 0, W = 0, Ctot = 0;
    for (const Var& x : xs) {
        const Tensor& v = x.value();
        check_input("concat_channels", v);
        require_rank("concat_channels", v, 4);
        if (x.graph() != &g) throw ShapeError("concat_channels: mixed graphs");
        if (Ctot == 0) {
            H = v.dim(2);
            W = v.dim(3);
        }
        if (v.dim(0) != N || v.dim(2) != H || v.dim(3) != W)
            throw ShapeError("concat_channels: incompatible shape " + v.shape_str());
        Ctot += v.dim(1);
    }

    Tensor out({N, Ctot, H, W});
    std::vector<int> pids;
    std::vector<int64_t> chans;
    int64_t coff = 0;
    for (const Var& x : xs) {
        const Tensor& v = x.value();
        int64_t C = v.dim(1);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t w = 0; w < W; ++w)
                        out[out.at4(n, coff + c, h, w)] = v[v.at4(n, c, h, w)];
        pids.push_back(x.id());
        chans.push_back(C);
        coff += C;
    }

    return g.emplace("concat_channels", pids, std::move(out),
                     [=, pids = std::move(pids), chans = std::move(chans)](Graph& gr,
                                                                           const Tensor& gout) {
                         int64_t off = 0;
                         for (size_t i = 0; i < pids.size(); ++i) {
                             int64_t C = chans[i];
                             Tensor gx({N, C, H, W});
                             for (int64_t n = 0; n < N; ++n)
                                 for (int64_t c = 0; c < C; ++c)
                                     for (int64_t h = 0; h < H; ++h)
                                         for (int64_t w = 0; w < W; ++w)
                                             gx[gx.at4(n, c, h, w)] =
                                                 gout[gout.at4(n, off + c, h, w)];
                             gr.accumulate(pids[i], gx);
                             off += C;
                         }
                     });
}

Var maxabs_normalize(Var d) {
    Graph& g = *d.graph();
    const Tensor& dv = d.value();
    check_input("maxabs_normalize", dv);
    require_rank("maxabs_normalize", dv, 4);

    int64_t N = dv.dim(0);
    int64_t per = dv.numel() / N;
    Tensor out(dv.shape());
    std::vector<double> scales(static_cast<size_t>(N));
    std::vector<int64_t> argmax(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
        double m = -1.0;
        int64_t mi = -1;
        for (int64_t i = 0; i < per; ++i) {
            double a = std::abs(dv[n * per + i]);
            if (a > m) {
                m = a;
                mi = n * per + i;
            }
        }
        double M = std::max(m, kLogFloor);
        scales[static_cast<size_t>(n)] = M;
        argmax[static_cast<size_t>(n)] = mi;
        for (int64_t i = 0; i < per; ++i) out[n * per + i] = std::abs(dv[n * per + i]) / M;
    }

    int did = d.id();
    Tensor dc = dv;
    return g.emplace(
        "maxabs_normalize", {did}, std::move(out),
        [=, dc = std::move(dc), scales = std::move(scales),
         argmax = std::move(argmax)](Graph& gr, const Tensor& gout) {
            Tensor gd(dc.shape());
            for (int64_t n = 0; n < N; ++n) {
                double M = scales[static_cast<size_t>(n)];
                bool floored = M <= kLogFloor;
                for (int64_t i = 0; i < per; ++i) {
                    int64_t idx = n * per + i;
                    gd[idx] = sign(dc[idx]) * gout[idx] / M;
                }
                if (!floored) {
                    // quotient rule: the max entry also scales every output of its example
                    double s = 0.0;
                    for (int64_t i = 0; i < per; ++i) {
                        int64_t idx = n * per + i;
                        s += std::abs(dc[idx]) * gout[idx];
                    }
                    int64_t a = argmax[static_cast<size_t>(n)];
                    gd[a] -= sign(dc[a]) * s / (M * M);
                }
            }
            gr.accumulate(did, gd);
        });
}

Var detach(Var a) { return a.graph()->constant(a.value()); }

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h) {
    if (h <= 0.0) throw NumericError("finite_diff_gradient: step must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        double hi = h * (1.0 + std::abs(x[i]));
        probe[i] = x[i] + hi;
        double fp = f(probe);
        probe[i] = x[i] - hi;
        double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_gradient: non-finite function value");
        grad[i] = (fp - fm) / (2.0 * hi);
    }
    return grad;
}

}  // namespace lease
