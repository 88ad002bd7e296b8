#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "etlab/errors.hpp"
#include "etlab/linalg.hpp"
#include "etlab/rng.hpp"

namespace etlab {

/// Geometry and width of the velocity-field transformer.
struct ModelConfig {
    int d_model = 128;
    int n_heads = 4;
    int depth = 6;
    int patch_px = 8;
    int composite_px = 128;
    int vocab_size = 28;
    int prompt_len = 8;
    int time_embed_dim = 64;
    int mlp_ratio = 4;

    int grid_side() const { return composite_px / patch_px; }
    int n_image_tokens() const { return grid_side() * grid_side(); }
    int patch_dim() const { return patch_px * patch_px * 3; }
    int seq_len() const { return n_image_tokens() + prompt_len; }
    int d_mlp() const { return mlp_ratio * d_model; }

    void validate() const {
        if (d_model <= 0 || n_heads <= 0 || depth <= 0) throw ConfigError("model dims must be positive");
        if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
        if (d_model % 4 != 0) throw ConfigError("d_model must be divisible by 4 (2D sincos)");
        if (composite_px % (2 * patch_px) != 0)
            throw ConfigError("composite_px must be divisible by 2*patch_px");
        if (vocab_size <= 0 || prompt_len <= 0) throw ConfigError("bad text dims");
        if (time_embed_dim <= 0 || time_embed_dim % 2 != 0)
            throw ConfigError("time_embed_dim must be positive and even");
        if (mlp_ratio <= 0) throw ConfigError("mlp_ratio must be positive");
    }

    bool operator==(const ModelConfig&) const = default;
};

struct LoRAConfig {
    int rank = 4;
    double alpha = 4.0;
    std::vector<std::string> targets{"q", "k", "v", "o"};

    double scaling() const { return alpha / rank; }
    bool targets_projection(const std::string& p) const {
        for (const auto& t : targets)
            if (t == p) return true;
        return false;
    }
    void validate(int d_model) const {
        if (rank < 1) throw ConfigError("lora rank must be >= 1");
        if (rank > d_model) throw ConfigError("lora rank must be <= d_model");
        if (targets.empty()) throw ConfigError("lora targets must be non-empty");
        for (const auto& t : targets)
            if (t != "q" && t != "k" && t != "v" && t != "o")
                throw ConfigError("lora target must be one of q,k,v,o: " + t);
        for (size_t i = 0; i < targets.size(); ++i)
            for (size_t j = i + 1; j < targets.size(); ++j)
                if (targets[i] == targets[j]) throw ConfigError("duplicate lora target");
    }

    bool operator==(const LoRAConfig&) const = default;
};

/// W x + (alpha/r) * B (A x); B starts at zero so a fresh adapter is the
/// exact identity.
template <typename T>
struct LoRAPair {
    Mat<T> a;  // r x d_in
    Mat<T> b;  // d_out x r
};

template <typename T>
struct BlockLoRA {
    std::optional<LoRAPair<T>> q, k, v, o;
};

template <typename T>
struct AttentionWeights {
    Mat<T> wq, wk, wv, wo;  // d x d
    Vec<T> bq, bk, bv, bo;  // d
};

template <typename T>
struct BlockWeights {
    AttentionWeights<T> attn;
    Mat<T> mlp_w1;  // 4d x d
    Vec<T> mlp_b1;
    Mat<T> mlp_w2;  // d x 4d
    Vec<T> mlp_b2;
    Mat<T> ada_w;  // 4d x d -> [shift1, scale1, shift2, scale2]
    Vec<T> ada_b;
};

/// The velocity network v_theta. Holds trainable tensors plus the fixed 2D
/// sinusoidal position buffer. The same struct doubles as a gradient /
/// optimizer-moment container (shapes are what matter).
template <typename T>
struct Model {
    ModelConfig cfg;
    std::optional<LoRAConfig> lora_cfg;

    Mat<T> patch_w;  // d x P
    Vec<T> patch_b;
    Mat<T> tok_emb;   // V x d
    Mat<T> text_pos;  // M x d
    Mat<T> time_w1;   // d x TE
    Vec<T> time_b1;
    Mat<T> time_w2;  // d x d
    Vec<T> time_b2;
    std::vector<BlockWeights<T>> blocks;
    std::vector<BlockLoRA<T>> lora;  // parallel to blocks
    Vec<T> head_ln_g, head_ln_b;
    Mat<T> head_w;  // P x d
    Vec<T> head_b;

    Mat<T> pos_img;  // N x d, fixed (not trainable)
};

enum class ParamFilter { all, base_only, lora_only };

/// Enumerates trainable tensors in a fixed global order (base tensors, then
/// adapters). Everything that iterates parameters — init, Adam, checkpoints,
/// the gradient check — goes through here, so orders always agree.
template <typename T, typename F>
void visit_params(Model<T>& m, F&& f, ParamFilter filter = ParamFilter::all) {
    const bool base = filter != ParamFilter::lora_only;
    const bool adapters = filter != ParamFilter::base_only;
    if (base) {
        f("patch_embed.w", m.patch_w);
        f("patch_embed.b", m.patch_b);
        f("text_embed.tok", m.tok_emb);
        f("text_embed.pos", m.text_pos);
        f("time_mlp.w1", m.time_w1);
        f("time_mlp.b1", m.time_b1);
        f("time_mlp.w2", m.time_w2);
        f("time_mlp.b2", m.time_b2);
        for (size_t i = 0; i < m.blocks.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".";
            BlockWeights<T>& b = m.blocks[i];
            f(p + "attn.wq", b.attn.wq);
            f(p + "attn.bq", b.attn.bq);
            f(p + "attn.wk", b.attn.wk);
            f(p + "attn.bk", b.attn.bk);
            f(p + "attn.wv", b.attn.wv);
            f(p + "attn.bv", b.attn.bv);
            f(p + "attn.wo", b.attn.wo);
            f(p + "attn.bo", b.attn.bo);
            f(p + "mlp.w1", b.mlp_w1);
            f(p + "mlp.b1", b.mlp_b1);
            f(p + "mlp.w2", b.mlp_w2);
            f(p + "mlp.b2", b.mlp_b2);
            f(p + "ada.w", b.ada_w);
            f(p + "ada.b", b.ada_b);
        }
        f("head.ln.g", m.head_ln_g);
        f("head.ln.b", m.head_ln_b);
        f("head.w", m.head_w);
        f("head.b", m.head_b);
    }
    if (adapters) {
        for (size_t i = 0; i < m.lora.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i) + ".attn.";
            auto visit_pair = [&](const char* name, std::optional<LoRAPair<T>>& pair) {
                if (!pair) return;
                f(p + name + std::string(".lora.a"), pair->a);
                f(p + name + std::string(".lora.b"), pair->b);
            };
            visit_pair("q", m.lora[i].q);
            visit_pair("k", m.lora[i].k);
            visit_pair("v", m.lora[i].v);
            visit_pair("o", m.lora[i].o);
        }
    }
}

template <typename T, typename F>
void visit_params(const Model<T>& m, F&& f, ParamFilter filter = ParamFilter::all) {
    visit_params(const_cast<Model<T>&>(m),
                 [&](const std::string& name, auto& tensor) {
                     f(name, static_cast<const std::decay_t<decltype(tensor)>&>(tensor));
                 },
                 filter);
}

namespace detail {

template <typename T>
Mat<T> sincos_1d(int n_positions, int dim) {
    // Standard transformer sincos table: pe[p, 2i] = sin(p * w_i),
    // pe[p, 2i+1] = cos(p * w_i), w_i = 10000^{-2i/dim}.
    Mat<T> pe(n_positions, dim);
    for (int p = 0; p < n_positions; ++p)
        for (int i = 0; i < dim / 2; ++i) {
            const double w = std::pow(10000.0, -2.0 * i / dim);
            pe(p, 2 * i) = static_cast<T>(std::sin(p * w));
            pe(p, 2 * i + 1) = static_cast<T>(std::cos(p * w));
        }
    return pe;
}

template <typename T>
Mat<T> build_pos_img(const ModelConfig& cfg) {
    const int side = cfg.grid_side();
    const int half = cfg.d_model / 2;
    const Mat<T> row_pe = sincos_1d<T>(side, half);
    const Mat<T> col_pe = sincos_1d<T>(side, half);
    Mat<T> pos(cfg.n_image_tokens(), cfg.d_model);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            pos.row(r * side + c).head(half) = row_pe.row(r);
            pos.row(r * side + c).tail(half) = col_pe.row(c);
        }
    return pos;
}

template <typename T, typename TensorT>
void fill_gaussian(TensorT& t, Rng& rng, double std_dev) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j)
            t(i, j) = static_cast<T>(rng.gaussian() * std_dev);
}

}  // namespace detail

/// Allocates and initializes a model. The velocity head starts at zero (so
/// an untrained model predicts zero velocity) and adaLN starts at zero (so
/// modulation starts as plain LayerNorm).
template <typename T>
Model<T> init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.cfg = cfg;
    const int d = cfg.d_model;
    const int P = cfg.patch_dim();

    m.patch_w.setZero(d, P);
    m.patch_b.setZero(d);
    m.tok_emb.setZero(cfg.vocab_size, d);
    m.text_pos.setZero(cfg.prompt_len, d);
    m.time_w1.setZero(d, cfg.time_embed_dim);
    m.time_b1.setZero(d);
    m.time_w2.setZero(d, d);
    m.time_b2.setZero(d);
    m.blocks.resize(cfg.depth);
    m.lora.resize(cfg.depth);
    for (auto& b : m.blocks) {
        b.attn.wq.setZero(d, d);
        b.attn.wk.setZero(d, d);
        b.attn.wv.setZero(d, d);
        b.attn.wo.setZero(d, d);
        b.attn.bq.setZero(d);
        b.attn.bk.setZero(d);
        b.attn.bv.setZero(d);
        b.attn.bo.setZero(d);
        b.mlp_w1.setZero(cfg.d_mlp(), d);
        b.mlp_b1.setZero(cfg.d_mlp());
        b.mlp_w2.setZero(d, cfg.d_mlp());
        b.mlp_b2.setZero(d);
        b.ada_w.setZero(4 * d, d);
        b.ada_b.setZero(4 * d);
    }
    m.head_ln_g.setOnes(d);
    m.head_ln_b.setZero(d);
    m.head_w.setZero(P, d);
    m.head_b.setZero(P);
    m.pos_img = detail::build_pos_img<T>(cfg);

    Rng rng(mix_seed(seed, 0x494e4954ull));  // "INIT"
    constexpr double kStd = 0.02;
    visit_params(m, [&](const std::string& name, auto& tensor) {
        const bool is_weight = name.ends_with(".w") || name.ends_with(".wq") ||
                               name.ends_with(".wk") || name.ends_with(".wv") ||
                               name.ends_with(".wo") || name.ends_with(".w1") ||
                               name.ends_with(".w2") || name.ends_with(".tok") ||
                               name.ends_with(".pos");
        const bool zero_init = name.starts_with("head.") || name.find("ada.") != std::string::npos;
        if (is_weight && !zero_init) detail::fill_gaussian<T>(tensor, rng, kStd);
    });
    return m;
}

/// Fills every trainable tensor with Gaussian noise; used by tests that
/// need non-degenerate gradients everywhere (the finite-difference check).
template <typename T>
void randomize_params(Model<T>& m, uint64_t seed, double std_dev = 0.05) {
    Rng rng(mix_seed(seed, 0x524e44ull));  // "RND"
    visit_params(m, [&](const std::string&, auto& tensor) {
        detail::fill_gaussian<T>(tensor, rng, std_dev);
    });
    // keep head LN gain near 1 rather than near 0
    m.head_ln_g.array() += T(1);
}

/// Zero-shaped clone: gradient / Adam-moment container.
template <typename T>
Model<T> zeros_like(const Model<T>& m) {
    Model<T> z = m;
    visit_params(z, [](const std::string&, auto& tensor) { tensor.setZero(); });
    z.pos_img.setZero();
    return z;
}

// ---------------------------------------------------------------------------
// LoRA adapter algebra
// ---------------------------------------------------------------------------

template <typename T>
void attach_lora(Model<T>& m, const LoRAConfig& cfg, uint64_t seed) {
    cfg.validate(m.cfg.d_model);
    if (m.lora_cfg) throw AlreadyAdapted("model already carries adapters");
    m.lora_cfg = cfg;
    Rng rng(mix_seed(seed, 0x4c4f5241ull));  // "LORA"
    const int d = m.cfg.d_model;
    for (auto& bl : m.lora) {
        auto make_pair = [&](const char* p, std::optional<LoRAPair<T>>& slot) {
            if (!cfg.targets_projection(p)) return;
            LoRAPair<T> pair;
            pair.a.setZero(cfg.rank, d);
            detail::fill_gaussian<T>(pair.a, rng, 0.02);
            pair.b.setZero(d, cfg.rank);  // exact identity at init
            slot = std::move(pair);
        };
        make_pair("q", bl.q);
        make_pair("k", bl.k);
        make_pair("v", bl.v);
        make_pair("o", bl.o);
    }
}

/// Folds W' = W + (alpha/r) B A into the base weights and drops adapters.
template <typename T>
void merge_lora(Model<T>& m) {
    if (!m.lora_cfg) return;
    const T s = static_cast<T>(m.lora_cfg->scaling());
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        auto fold = [&](std::optional<LoRAPair<T>>& pair, Mat<T>& w) {
            if (!pair) return;
            w.noalias() += s * pair->b * pair->a;
            pair.reset();
        };
        fold(m.lora[i].q, m.blocks[i].attn.wq);
        fold(m.lora[i].k, m.blocks[i].attn.wk);
        fold(m.lora[i].v, m.blocks[i].attn.wv);
        fold(m.lora[i].o, m.blocks[i].attn.wo);
    }
    m.lora_cfg.reset();
}

/// Adapter parameter count per targeted projection: r*d_in + d_out*r.
inline long lora_params_per_projection(int rank, int d_model) {
    return static_cast<long>(rank) * d_model + static_cast<long>(d_model) * rank;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// One composite's worth of tokens. Image token rows are in model space
/// ([-1,1] patch pixels); target rows hold the noised z_t. `positions`
/// carries the grid coordinate of every image token, so attention results
/// do not depend on row order.
template <typename T>
struct ModelInput {
    Mat<T> img_tokens;  // N x P
    std::vector<std::pair<int, int>> positions;
    std::vector<int> target_rows;
    std::vector<int> cond_rows;
    std::vector<int> prompt_ids;
    T t = T(0);
};

template <typename T>
struct BlockCache {
    Mat<T> x_in, h1n, m1;
    Vec<T> inv1;
    Mat<T> q, k, v;
    std::vector<Mat<T>> attn;  // per head, S x S
    Mat<T> attn_concat;
    Mat<T> uq, uk, uv, uo;  // LoRA intermediates (S x r) when adapted
    Mat<T> x_mid, h2n, m2;
    Vec<T> inv2;
    Mat<T> mlp_u, mlp_a;
};

template <typename T>
struct ForwardCache {
    Vec<T> time_feat, time_p, time_h, temb;
    std::vector<Vec<T>> ada_out;
    Mat<T> x0;
    std::vector<BlockCache<T>> blocks;
    Mat<T> head_in, head_norm;
    Vec<T> head_inv;
    Mat<T> head_y;
};

namespace detail {

constexpr double kLnEps = 1e-5;

/// Row-wise LayerNorm without affine params. Returns normalized rows and
/// stores 1/sigma per row.
template <typename T>
Mat<T> layer_norm(const Mat<T>& x, Vec<T>& inv_out) {
    const Eigen::Index S = x.rows(), d = x.cols();
    Mat<T> y(S, d);
    inv_out.resize(S);
    for (Eigen::Index i = 0; i < S; ++i) {
        const T mu = x.row(i).mean();
        const T var = (x.row(i).array() - mu).square().mean();
        const T inv = T(1) / std::sqrt(var + T(kLnEps));
        inv_out(i) = inv;
        y.row(i) = ((x.row(i).array() - mu) * inv).matrix();
    }
    return y;
}

/// dL/dx for y = normalize(x): dx = inv*(dy - mean(dy) - y*mean(dy.*y)).
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& y, const Vec<T>& inv) {
    const Eigen::Index S = dy.rows(), d = dy.cols();
    Mat<T> dx(S, d);
    for (Eigen::Index i = 0; i < S; ++i) {
        const T m1 = dy.row(i).mean();
        const T m2 = (dy.row(i).array() * y.row(i).array()).mean();
        dx.row(i) = (inv(i) * (dy.row(i).array() - m1 - y.row(i).array() * m2)).matrix();
    }
    return dx;
}

template <typename T>
T gelu_scalar(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
}

template <typename T>
T gelu_grad_scalar(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
    return cdf + x * pdf;
}

template <typename T>
T silu_scalar(T x) {
    return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_grad_scalar(T x) {
    const T sig = T(1) / (T(1) + std::exp(-x));
    return sig * (T(1) + x * (T(1) - sig));
}

template <typename T>
Vec<T> time_features(T t, int dim) {
    // DiT-style frequency embedding of the (scaled) timestep.
    Vec<T> feat(dim);
    const int half = dim / 2;
    const double scaled = static_cast<double>(t) * 1000.0;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        feat(i) = static_cast<T>(std::cos(scaled * freq));
        feat(half + i) = static_cast<T>(std::sin(scaled * freq));
    }
    return feat;
}

/// y = x W^T + b, optionally plus the LoRA path; caches u = x A^T.
template <typename T>
Mat<T> linear_proj(const Mat<T>& x, const Mat<T>& w, const Vec<T>& b,
                   const std::optional<LoRAPair<T>>& lora, T lora_scale, Mat<T>* u_cache) {
    Mat<T> y = x * w.transpose();
    y.rowwise() += b.transpose();
    if (lora) {
        Mat<T> u = x * lora->a.transpose();
        y.noalias() += lora_scale * u * lora->b.transpose();
        if (u_cache) *u_cache = std::move(u);
    }
    return y;
}

/// Backward through linear_proj. Accumulates into the gradient containers
/// and into dx.
template <typename T>
void linear_proj_backward(const Mat<T>& dy, const Mat<T>& x, const Mat<T>& w,
                          const std::optional<LoRAPair<T>>& lora, T lora_scale, const Mat<T>& u,
                          bool base_grads, Mat<T>* dw, Vec<T>* db,
                          std::optional<LoRAPair<T>>* dlora, Mat<T>& dx) {
    if (base_grads) {
        dw->noalias() += dy.transpose() * x;
        *db += dy.colwise().sum().transpose();
    }
    dx.noalias() += dy * w;
    if (lora) {
        Mat<T> du = lora_scale * dy * lora->b;
        if (dlora && *dlora) {
            (*dlora)->b.noalias() += lora_scale * dy.transpose() * u;
            (*dlora)->a.noalias() += du.transpose() * x;
        }
        dx.noalias() += du * lora->a;
    }
}

}  // namespace detail

/// Plain multi-modal attention over a raw token sequence:
/// softmax(Q K^T / sqrt(d_head)) V followed by the output projection.
/// Optionally emits the per-head attention matrices.
template <typename T>
Mat<T> mma_forward(const Mat<T>& tokens, const AttentionWeights<T>& w, int n_heads,
                   std::vector<Mat<T>>* attn_out = nullptr) {
    const Eigen::Index S = tokens.rows();
    const Eigen::Index d = tokens.cols();
    if (w.wq.rows() != d || w.wq.cols() != d) throw ShapeError("mma_forward: weight shape");
    if (d % n_heads != 0) throw ShapeError("mma_forward: d not divisible by heads");
    const Eigen::Index dh = d / n_heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> q = tokens * w.wq.transpose();
    q.rowwise() += w.bq.transpose();
    Mat<T> k = tokens * w.wk.transpose();
    k.rowwise() += w.bk.transpose();
    Mat<T> v = tokens * w.wv.transpose();
    v.rowwise() += w.bv.transpose();

    Mat<T> concat(S, d);
    if (attn_out) attn_out->clear();
    for (int h = 0; h < n_heads; ++h) {
        Mat<T> scores = scale * q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
        for (Eigen::Index i = 0; i < S; ++i) {
            const T m = scores.row(i).maxCoeff();
            scores.row(i) = (scores.row(i).array() - m).exp();
            scores.row(i) /= scores.row(i).sum();
        }
        concat.middleCols(h * dh, dh).noalias() = scores * v.middleCols(h * dh, dh);
        if (attn_out) attn_out->push_back(std::move(scores));
    }
    Mat<T> out = concat * w.wo.transpose();
    out.rowwise() += w.bo.transpose();
    return out;
}

namespace detail {

template <typename T>
void validate_input(const Model<T>& m, const ModelInput<T>& in) {
    const ModelConfig& cfg = m.cfg;
    if (in.img_tokens.rows() != cfg.n_image_tokens() || in.img_tokens.cols() != cfg.patch_dim())
        throw ShapeError("forward: image token matrix has wrong shape");
    if (static_cast<int>(in.positions.size()) != cfg.n_image_tokens())
        throw ShapeError("forward: positions size mismatch");
    if (in.target_rows.empty() || in.cond_rows.empty())
        throw SegmentError("forward: need both target and conditional segments");
    if (static_cast<int>(in.prompt_ids.size()) != cfg.prompt_len)
        throw SegmentError("forward: prompt segment has wrong length");
    if (static_cast<int>(in.target_rows.size() + in.cond_rows.size()) != cfg.n_image_tokens())
        throw SegmentError("forward: segments do not partition the image tokens");
    std::vector<char> seen(static_cast<size_t>(cfg.n_image_tokens()), 0);
    for (int r : in.target_rows) {
        if (r < 0 || r >= cfg.n_image_tokens() || seen[static_cast<size_t>(r)]++)
            throw SegmentError("forward: bad target row index");
    }
    for (int r : in.cond_rows) {
        if (r < 0 || r >= cfg.n_image_tokens() || seen[static_cast<size_t>(r)]++)
            throw SegmentError("forward: bad conditional row index");
    }
    for (const auto& [pr, pc] : in.positions)
        if (pr < 0 || pr >= cfg.grid_side() || pc < 0 || pc >= cfg.grid_side())
            throw ShapeError("forward: position outside grid");
    for (int id : in.prompt_ids)
        if (id < 0 || id >= cfg.vocab_size) throw SegmentError("forward: prompt id out of range");
    if (in.t < T(0) || in.t > T(1)) throw UsageError("forward: t must be in [0,1]");
}

}  // namespace detail

/// Runs the transformer and returns predicted velocities, one patch-sized
/// row per target token (in target_rows order). Predictions exist only for
/// noisy-target positions.
template <typename T>
Mat<T> forward_velocity(const Model<T>& m, const ModelInput<T>& in,
                        ForwardCache<T>* cache = nullptr) {
    detail::validate_input(m, in);
    const ModelConfig& cfg = m.cfg;
    const int N = cfg.n_image_tokens();
    const int M = cfg.prompt_len;
    const int S = N + M;
    const int d = cfg.d_model;
    const int nh = cfg.n_heads;
    const int dh = d / nh;
    const T attn_scale = T(1) / std::sqrt(static_cast<T>(dh));
    const T lora_scale = m.lora_cfg ? static_cast<T>(m.lora_cfg->scaling()) : T(0);
    const int side = cfg.grid_side();

    ForwardCache<T> local;
    ForwardCache<T>& cc = cache ? *cache : local;

    // Timestep embedding -> conditioning vector.
    cc.time_feat = detail::time_features(in.t, cfg.time_embed_dim);
    cc.time_p = m.time_w1 * cc.time_feat + m.time_b1;
    cc.time_h.resize(d);
    for (int i = 0; i < d; ++i) cc.time_h(i) = detail::silu_scalar(cc.time_p(i));
    cc.temb = m.time_w2 * cc.time_h + m.time_b2;

    // Token embedding: image rows get the patch projection plus 2D sincos
    // position; text rows get vocab embedding plus learned slot position.
    cc.x0.resize(S, d);
    cc.x0.topRows(N).noalias() = in.img_tokens * m.patch_w.transpose();
    cc.x0.topRows(N).rowwise() += m.patch_b.transpose();
    for (int i = 0; i < N; ++i) {
        const auto& [pr, pc] = in.positions[static_cast<size_t>(i)];
        cc.x0.row(i) += m.pos_img.row(pr * side + pc);
    }
    for (int s = 0; s < M; ++s)
        cc.x0.row(N + s) = m.tok_emb.row(in.prompt_ids[static_cast<size_t>(s)]) + m.text_pos.row(s);

    cc.ada_out.resize(static_cast<size_t>(cfg.depth));
    cc.blocks.resize(static_cast<size_t>(cfg.depth));

    Mat<T> x = cc.x0;
    for (int bi = 0; bi < cfg.depth; ++bi) {
        BlockCache<T>& bc = cc.blocks[static_cast<size_t>(bi)];
        const BlockWeights<T>& bw = m.blocks[static_cast<size_t>(bi)];
        const BlockLoRA<T>& bl = m.lora[static_cast<size_t>(bi)];

        cc.ada_out[static_cast<size_t>(bi)] = bw.ada_w * cc.temb + bw.ada_b;
        const Vec<T>& ada = cc.ada_out[static_cast<size_t>(bi)];
        const auto sh1 = ada.segment(0, d);
        const auto sc1 = ada.segment(d, d);
        const auto sh2 = ada.segment(2 * d, d);
        const auto sc2 = ada.segment(3 * d, d);

        bc.x_in = x;
        bc.h1n = detail::layer_norm(bc.x_in, bc.inv1);
        bc.m1 = bc.h1n.array().rowwise() * (sc1.transpose().array() + T(1));
        bc.m1.rowwise() += sh1.transpose();

        bc.q = detail::linear_proj(bc.m1, bw.attn.wq, bw.attn.bq, bl.q, lora_scale, &bc.uq);
        bc.k = detail::linear_proj(bc.m1, bw.attn.wk, bw.attn.bk, bl.k, lora_scale, &bc.uk);
        bc.v = detail::linear_proj(bc.m1, bw.attn.wv, bw.attn.bv, bl.v, lora_scale, &bc.uv);

        bc.attn_concat.resize(S, d);
        bc.attn.resize(static_cast<size_t>(nh));
        for (int h = 0; h < nh; ++h) {
            Mat<T> scores =
                attn_scale * bc.q.middleCols(h * dh, dh) * bc.k.middleCols(h * dh, dh).transpose();
            for (int i = 0; i < S; ++i) {
                const T mx = scores.row(i).maxCoeff();
                scores.row(i) = (scores.row(i).array() - mx).exp();
                scores.row(i) /= scores.row(i).sum();
            }
            bc.attn_concat.middleCols(h * dh, dh).noalias() =
                scores * bc.v.middleCols(h * dh, dh);
            bc.attn[static_cast<size_t>(h)] = std::move(scores);
        }
        Mat<T> attn_out =
            detail::linear_proj(bc.attn_concat, bw.attn.wo, bw.attn.bo, bl.o, lora_scale, &bc.uo);

        bc.x_mid = bc.x_in + attn_out;

        bc.h2n = detail::layer_norm(bc.x_mid, bc.inv2);
        bc.m2 = bc.h2n.array().rowwise() * (sc2.transpose().array() + T(1));
        bc.m2.rowwise() += sh2.transpose();

        bc.mlp_u = bc.m2 * bw.mlp_w1.transpose();
        bc.mlp_u.rowwise() += bw.mlp_b1.transpose();
        bc.mlp_a = bc.mlp_u.unaryExpr([](T u) { return detail::gelu_scalar(u); });
        Mat<T> mlp_out = bc.mlp_a * bw.mlp_w2.transpose();
        mlp_out.rowwise() += bw.mlp_b2.transpose();

        x = bc.x_mid + mlp_out;
    }

    // Velocity head on target rows only.
    const int nt = static_cast<int>(in.target_rows.size());
    cc.head_in.resize(nt, d);
    for (int i = 0; i < nt; ++i) cc.head_in.row(i) = x.row(in.target_rows[static_cast<size_t>(i)]);
    cc.head_norm = detail::layer_norm(cc.head_in, cc.head_inv);
    cc.head_y = cc.head_norm.array().rowwise() * m.head_ln_g.transpose().array();
    cc.head_y.rowwise() += m.head_ln_b.transpose();
    Mat<T> vel = cc.head_y * m.head_w.transpose();
    vel.rowwise() += m.head_b.transpose();
    return vel;
}

/// Backpropagates d(loss)/d(velocity) into parameter gradients. `grads`
/// must be zeros_like(m) (or an accumulator with the same adapter layout).
/// When base_grads is false only adapter tensors accumulate — the frozen-
/// base fine-tuning path.
template <typename T>
void backward_velocity(const Model<T>& m, const ModelInput<T>& in, const ForwardCache<T>& cc,
                       const Mat<T>& dvel, Model<T>& grads, bool base_grads = true) {
    const ModelConfig& cfg = m.cfg;
    const int N = cfg.n_image_tokens();
    const int M = cfg.prompt_len;
    const int S = N + M;
    const int d = cfg.d_model;
    const int nh = cfg.n_heads;
    const int dh = d / nh;
    const T attn_scale = T(1) / std::sqrt(static_cast<T>(dh));
    const T lora_scale = m.lora_cfg ? static_cast<T>(m.lora_cfg->scaling()) : T(0);
    const int side = cfg.grid_side();
    const int nt = static_cast<int>(in.target_rows.size());

    // Head.
    if (base_grads) {
        grads.head_w.noalias() += dvel.transpose() * cc.head_y;
        grads.head_b += dvel.colwise().sum().transpose();
    }
    Mat<T> dy = dvel * m.head_w;
    if (base_grads) {
        grads.head_ln_g += (dy.array() * cc.head_norm.array()).colwise().sum().transpose().matrix();
        grads.head_ln_b += dy.colwise().sum().transpose();
    }
    Mat<T> dnorm = dy.array().rowwise() * m.head_ln_g.transpose().array();
    Mat<T> dhead_in = detail::layer_norm_backward(dnorm, cc.head_norm, cc.head_inv);

    Mat<T> dx = Mat<T>::Zero(S, d);
    for (int i = 0; i < nt; ++i) dx.row(in.target_rows[static_cast<size_t>(i)]) = dhead_in.row(i);

    Vec<T> dtemb = Vec<T>::Zero(d);

    for (int bi = cfg.depth - 1; bi >= 0; --bi) {
        const BlockCache<T>& bc = cc.blocks[static_cast<size_t>(bi)];
        const BlockWeights<T>& bw = m.blocks[static_cast<size_t>(bi)];
        const BlockLoRA<T>& bl = m.lora[static_cast<size_t>(bi)];
        BlockWeights<T>& gw = grads.blocks[static_cast<size_t>(bi)];
        BlockLoRA<T>* gl = &grads.lora[static_cast<size_t>(bi)];
        const Vec<T>& ada = cc.ada_out[static_cast<size_t>(bi)];
        const auto sc1 = ada.segment(d, d);
        const auto sc2 = ada.segment(3 * d, d);

        Vec<T> dada = Vec<T>::Zero(4 * d);

        // MLP branch: x_out = x_mid + mlp(m2).
        Mat<T> dmlp_out = dx;  // residual copy
        if (base_grads) {
            gw.mlp_w2.noalias() += dmlp_out.transpose() * bc.mlp_a;
            gw.mlp_b2 += dmlp_out.colwise().sum().transpose();
        }
        Mat<T> da = dmlp_out * bw.mlp_w2;
        Mat<T> du =
            da.array() * bc.mlp_u.unaryExpr([](T u) { return detail::gelu_grad_scalar(u); }).array();
        if (base_grads) {
            gw.mlp_w1.noalias() += du.transpose() * bc.m2;
            gw.mlp_b1 += du.colwise().sum().transpose();
        }
        Mat<T> dm2 = du * bw.mlp_w1;

        // Modulation 2 and LN 2.
        Mat<T> dh2n = dm2.array().rowwise() * (sc2.transpose().array() + T(1));
        dada.segment(3 * d, d) += (dm2.array() * bc.h2n.array()).colwise().sum().transpose().matrix();
        dada.segment(2 * d, d) += dm2.colwise().sum().transpose();
        Mat<T> dx_mid = dx;  // residual path around the MLP
        dx_mid += detail::layer_norm_backward(dh2n, bc.h2n, bc.inv2);

        // Attention branch: x_mid = x_in + proj_o(attn_concat).
        Mat<T> dattn_out = dx_mid;
        Mat<T> dconcat = Mat<T>::Zero(S, d);
        detail::linear_proj_backward(dattn_out, bc.attn_concat, bw.attn.wo, bl.o, lora_scale,
                                     bc.uo, base_grads, &gw.attn.wo, &gw.attn.bo,
                                     gl ? &gl->o : nullptr, dconcat);

        Mat<T> dq(S, d), dk(S, d), dv(S, d);
        for (int h = 0; h < nh; ++h) {
            const Mat<T>& P = bc.attn[static_cast<size_t>(h)];
            const auto Vh = bc.v.middleCols(h * dh, dh);
            const auto dOh = dconcat.middleCols(h * dh, dh);
            dv.middleCols(h * dh, dh).noalias() = P.transpose() * dOh;
            Mat<T> dP = dOh * Vh.transpose();
            // softmax backward (rows)
            Vec<T> rowdot = (dP.array() * P.array()).rowwise().sum();
            Mat<T> dS = P.array() * (dP.array().colwise() - rowdot.array());
            dq.middleCols(h * dh, dh).noalias() =
                attn_scale * dS * bc.k.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh).noalias() =
                attn_scale * dS.transpose() * bc.q.middleCols(h * dh, dh);
        }

        Mat<T> dm1 = Mat<T>::Zero(S, d);
        detail::linear_proj_backward(dq, bc.m1, bw.attn.wq, bl.q, lora_scale, bc.uq, base_grads,
                                     &gw.attn.wq, &gw.attn.bq, gl ? &gl->q : nullptr, dm1);
        detail::linear_proj_backward(dk, bc.m1, bw.attn.wk, bl.k, lora_scale, bc.uk, base_grads,
                                     &gw.attn.wk, &gw.attn.bk, gl ? &gl->k : nullptr, dm1);
        detail::linear_proj_backward(dv, bc.m1, bw.attn.wv, bl.v, lora_scale, bc.uv, base_grads,
                                     &gw.attn.wv, &gw.attn.bv, gl ? &gl->v : nullptr, dm1);

        // Modulation 1 and LN 1.
        Mat<T> dh1n = dm1.array().rowwise() * (sc1.transpose().array() + T(1));
        dada.segment(d, d) += (dm1.array() * bc.h1n.array()).colwise().sum().transpose().matrix();
        dada.segment(0, d) += dm1.colwise().sum().transpose();
        Mat<T> dx_in = dx_mid;  // residual path around attention
        dx_in += detail::layer_norm_backward(dh1n, bc.h1n, bc.inv1);

        // adaLN conditioning.
        if (base_grads) {
            gw.ada_w.noalias() += dada * cc.temb.transpose();
            gw.ada_b += dada;
        }
        dtemb.noalias() += bw.ada_w.transpose() * dada;

        dx = std::move(dx_in);
    }

    if (base_grads) {
        // Time MLP.
        grads.time_w2.noalias() += dtemb * cc.time_h.transpose();
        grads.time_b2 += dtemb;
        Vec<T> dh = m.time_w2.transpose() * dtemb;
        Vec<T> dp(d);
        for (int i = 0; i < d; ++i) dp(i) = dh(i) * detail::silu_grad_scalar(cc.time_p(i));
        grads.time_w1.noalias() += dp * cc.time_feat.transpose();
        grads.time_b1 += dp;

        // Embeddings.
        grads.patch_w.noalias() += dx.topRows(N).transpose() * in.img_tokens;
        grads.patch_b += dx.topRows(N).colwise().sum().transpose();
        for (int s = 0; s < M; ++s) {
            grads.tok_emb.row(in.prompt_ids[static_cast<size_t>(s)]) += dx.row(N + s);
            grads.text_pos.row(s) += dx.row(N + s);
        }
    }
    (void)side;
}

}  // namespace etlab
