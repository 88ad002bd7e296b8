#pragma once

#include <functional>

#include "etlab/dataset.hpp"
#include "etlab/errors.hpp"
#include "etlab/model.hpp"
#include "etlab/patchify.hpp"
#include "etlab/rng.hpp"

namespace etlab {

/// Tokenized composite with quadrant roles assigned: conditional rows stay
/// clean, target rows are the generation site. Token values live in model
/// space ([-1,1]).
template <typename T>
struct SampleTokens {
    Mat<T> patches;  // N x P
    std::vector<int> cond_rows, target_rows;
    std::vector<std::pair<int, int>> positions;
    std::vector<int> prompt_ids;
    int grid_side = 0;
    int patch_px = 0;
};

/// One point on the linear noising path. cond tokens are carried through
/// untouched — they are never mixed with noise.
template <typename T>
struct FlowState {
    Mat<T> z0;   // clean target tokens
    Mat<T> eps;  // standard Gaussian, same shape
    T t = T(0);
    Mat<T> zt;   // (1-t) z0 + t eps
    Mat<T> cond;
    std::vector<int> cond_rows, target_rows;
    std::vector<std::pair<int, int>> positions;
    std::vector<int> prompt_ids;
    int grid_side = 0;
    int patch_px = 0;
};

template <typename T>
struct SampleSchedule {
    int steps = 0;
    std::vector<T> times;  // strictly decreasing, 1 -> 0, length steps+1
};

/// Uniform time discretization: times[k] = (steps - k) / steps.
template <typename T>
SampleSchedule<T> make_schedule(int steps) {
    if (steps < 1) throw BadSchedule("schedule needs at least one step");
    SampleSchedule<T> s;
    s.steps = steps;
    s.times.reserve(static_cast<size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k)
        s.times.push_back(static_cast<T>(static_cast<double>(steps - k) / steps));
    return s;
}

/// z_t = (1-t) z_0 + t eps.
template <typename T>
Mat<T> noise_path(const Mat<T>& z0, const Mat<T>& eps, T t) {
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols())
        throw ShapeError("noise_path: shape mismatch");
    if (t < T(0) || t > T(1)) throw UsageError("noise_path: t must be in [0,1]");
    return (T(1) - t) * z0 + t * eps;
}

/// Constant target velocity of the linear path: u = eps - z_0 = d z_t / dt.
template <typename T>
Mat<T> target_velocity(const Mat<T>& z0, const Mat<T>& eps) {
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols())
        throw ShapeError("target_velocity: shape mismatch");
    return eps - z0;
}

/// Tokenizes a composite and assigns quadrant roles. target_quadrant 3 is
/// the bottom-right (the in-context convention); pretraining rotates it.
template <typename T>
SampleTokens<T> tokenize_composite(const Image& composite, int patch_px, int target_quadrant,
                                   const std::vector<int>& prompt_ids) {
    SampleTokens<T> tk;
    tk.patches = to_model_space(extract_patches<T>(composite, patch_px));
    tk.grid_side = composite.width / patch_px;
    tk.patch_px = patch_px;
    tk.positions = grid_positions(tk.grid_side);
    tk.target_rows = quadrant_indices(tk.grid_side, target_quadrant);
    std::vector<uint8_t> is_target(static_cast<size_t>(tk.grid_side) * tk.grid_side, 0);
    for (int r : tk.target_rows) is_target[static_cast<size_t>(r)] = 1;
    for (int i = 0; i < tk.grid_side * tk.grid_side; ++i)
        if (!is_target[static_cast<size_t>(i)]) tk.cond_rows.push_back(i);
    tk.prompt_ids = prompt_ids;
    return tk;
}

template <typename T>
SampleTokens<T> tokenize_sample(const CompositeSample& sample, int patch_px) {
    return tokenize_composite<T>(sample.composite, patch_px, 3, sample.prompt.token_ids);
}

/// Draws (t, eps) from the seed and builds the noised state. Draw order is
/// fixed: optional logit-normal/uniform t first, then eps in row-major
/// order, so tests can recompute the exact same state independently.
template <typename T>
FlowState<T> make_flow_state(const SampleTokens<T>& tk, uint64_t rng_seed,
                             bool logit_normal_t = false) {
    FlowState<T> st;
    st.cond_rows = tk.cond_rows;
    st.target_rows = tk.target_rows;
    st.positions = tk.positions;
    st.prompt_ids = tk.prompt_ids;
    st.grid_side = tk.grid_side;
    st.patch_px = tk.patch_px;

    const int nt = static_cast<int>(tk.target_rows.size());
    const int P = static_cast<int>(tk.patches.cols());
    st.z0.resize(nt, P);
    for (int i = 0; i < nt; ++i) st.z0.row(i) = tk.patches.row(tk.target_rows[static_cast<size_t>(i)]);
    st.cond.resize(static_cast<Eigen::Index>(tk.cond_rows.size()), P);
    for (size_t i = 0; i < tk.cond_rows.size(); ++i)
        st.cond.row(static_cast<Eigen::Index>(i)) = tk.patches.row(tk.cond_rows[i]);

    Rng rng(mix_seed(rng_seed, 0x464c4f57ull));  // "FLOW"
    if (logit_normal_t) {
        const double g = rng.gaussian();
        st.t = static_cast<T>(1.0 / (1.0 + std::exp(-g)));
    } else {
        st.t = static_cast<T>(rng.uniform());
    }
    st.eps.resize(nt, P);
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < P; ++j) st.eps(i, j) = static_cast<T>(rng.gaussian());
    st.zt = noise_path(st.z0, st.eps, st.t);
    return st;
}

/// Assembles the transformer input for a flow state: conditional rows hold
/// their clean tokens, target rows hold z.
template <typename T>
ModelInput<T> assemble_input(const FlowState<T>& st, const Mat<T>& z_target) {
    const int n = st.grid_side * st.grid_side;
    const int P = static_cast<int>(st.cond.cols());
    ModelInput<T> in;
    in.img_tokens.resize(n, P);
    for (size_t i = 0; i < st.cond_rows.size(); ++i)
        in.img_tokens.row(st.cond_rows[i]) = st.cond.row(static_cast<Eigen::Index>(i));
    for (size_t i = 0; i < st.target_rows.size(); ++i)
        in.img_tokens.row(st.target_rows[i]) = z_target.row(static_cast<Eigen::Index>(i));
    in.positions = st.positions;
    in.target_rows = st.target_rows;
    in.cond_rows = st.cond_rows;
    in.prompt_ids = st.prompt_ids;
    in.t = st.t;
    return in;
}

/// Conditional flow matching loss for an arbitrary velocity functional;
/// the mean is over target tokens and channels only.
template <typename T, typename VFn>
T cfm_loss_impl(const FlowState<T>& st, VFn&& velocity) {
    const Mat<T> v = velocity(st);
    const Mat<T> u = target_velocity(st.z0, st.eps);
    if (v.rows() != u.rows() || v.cols() != u.cols())
        throw ShapeError("cfm_loss: velocity shape mismatch");
    return ((v - u).array().square()).mean();
}

template <typename T>
T cfm_loss_tokens(const Model<T>& m, const SampleTokens<T>& tk, uint64_t rng_seed,
                  bool logit_normal_t = false) {
    const FlowState<T> st = make_flow_state(tk, rng_seed, logit_normal_t);
    return cfm_loss_impl(st, [&](const FlowState<T>& s) {
        return forward_velocity(m, assemble_input(s, s.zt));
    });
}

/// Spec-facing loss: draws (t, eps) from rng_seed and scores the model on
/// the sample's bottom-right quadrant. MissingTarget for inference-only
/// samples.
template <typename T>
T cfm_loss(const Model<T>& m, const CompositeSample& sample, uint64_t rng_seed) {
    if (!sample.with_target)
        throw MissingTarget("cfm_loss: sample has no ground-truth bottom-right panel");
    return cfm_loss_tokens(m, tokenize_sample<T>(sample, m.cfg.patch_px), rng_seed);
}

/// Loss plus parameter gradients (accumulated into `grads`, scaled by
/// `grad_scale`).
template <typename T>
T cfm_loss_and_grad(const Model<T>& m, const SampleTokens<T>& tk, uint64_t rng_seed,
                    Model<T>& grads, bool base_grads, T grad_scale = T(1),
                    bool logit_normal_t = false) {
    const FlowState<T> st = make_flow_state(tk, rng_seed, logit_normal_t);
    const ModelInput<T> in = assemble_input(st, st.zt);
    ForwardCache<T> cache;
    const Mat<T> v = forward_velocity(m, in, &cache);
    const Mat<T> u = target_velocity(st.z0, st.eps);
    const T denom = static_cast<T>(v.rows() * v.cols());
    const T loss = ((v - u).array().square()).sum() / denom;
    const Mat<T> dvel = (T(2) * grad_scale / denom) * (v - u);
    backward_velocity(m, in, cache, dvel, grads, base_grads);
    return loss;
}

/// Euler integration of dz/dt = v(z, t) along the (decreasing) schedule.
template <typename T, typename VFn>
Mat<T> euler_integrate(VFn&& velocity, Mat<T> z, const SampleSchedule<T>& schedule) {
    if (schedule.steps < 1 || static_cast<int>(schedule.times.size()) != schedule.steps + 1)
        throw BadSchedule("euler_integrate: malformed schedule");
    for (int k = 0; k < schedule.steps; ++k) {
        const T tk = schedule.times[static_cast<size_t>(k)];
        const T tk1 = schedule.times[static_cast<size_t>(k) + 1];
        z += (tk1 - tk) * velocity(z, tk);
    }
    return z;
}

/// Writes target-quadrant tokens back to a panel image, mapping model space
/// to pixels and clamping to [0,1].
template <typename T>
Image target_tokens_to_panel(const Mat<T>& z, const std::vector<int>& target_rows, int grid_side,
                             int patch_px) {
    const int half = grid_side / 2;
    const int panel_px = half * patch_px;
    Image panel(panel_px, panel_px);
    for (size_t i = 0; i < target_rows.size(); ++i) {
        const int idx = target_rows[i];
        const int r = idx / grid_side - half;
        const int c = idx % grid_side - half;
        int k = 0;
        for (int py = 0; py < patch_px; ++py)
            for (int px = 0; px < patch_px; ++px)
                for (int ch = 0; ch < 3; ++ch) {
                    const double pix = (static_cast<double>(z(static_cast<Eigen::Index>(i), k++)) + 1.0) * 0.5;
                    panel.at(r * patch_px + py, c * patch_px + px, ch) =
                        static_cast<float>(std::min(1.0, std::max(0.0, pix)));
                }
    }
    return panel;
}

/// Generic sampler core: draws z_T from the seed, integrates, returns the
/// generated bottom-right panel.
template <typename T, typename VFn>
Image euler_sample_with(VFn&& velocity, const SampleTokens<T>& tk,
                        const SampleSchedule<T>& schedule, uint64_t noise_seed) {
    const int nt = static_cast<int>(tk.target_rows.size());
    const int P = static_cast<int>(tk.patches.cols());
    Rng rng(mix_seed(noise_seed, 0x53414d50ull));  // "SAMP"
    Mat<T> z(nt, P);
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < P; ++j) z(i, j) = static_cast<T>(rng.gaussian());
    z = euler_integrate(velocity, std::move(z), schedule);
    return target_tokens_to_panel(z, tk.target_rows, tk.grid_side, tk.patch_px);
}

/// Model-driven sampler: fills the bottom-right quadrant conditioned on the
/// three clean panels and the prompt. The sample's own bottom-right content
/// is ignored (only c_I enters the input).
template <typename T>
Image euler_sample(const Model<T>& m, const CompositeSample& sample,
                   const SampleSchedule<T>& schedule, uint64_t noise_seed) {
    SampleTokens<T> tk = tokenize_sample<T>(sample, m.cfg.patch_px);
    FlowState<T> st;  // carries the conditioning layout for assemble_input
    st.cond_rows = tk.cond_rows;
    st.target_rows = tk.target_rows;
    st.positions = tk.positions;
    st.prompt_ids = tk.prompt_ids;
    st.grid_side = tk.grid_side;
    st.patch_px = tk.patch_px;
    st.cond.resize(static_cast<Eigen::Index>(tk.cond_rows.size()), tk.patches.cols());
    for (size_t i = 0; i < tk.cond_rows.size(); ++i)
        st.cond.row(static_cast<Eigen::Index>(i)) = tk.patches.row(tk.cond_rows[i]);

    auto velocity = [&](const Mat<T>& z, T t) {
        st.t = t;
        return forward_velocity(m, assemble_input(st, z));
    };
    return euler_sample_with(velocity, tk, schedule, noise_seed);
}

}  // namespace etlab
