#pragma once

#include <utility>
#include <vector>

#include "etlab/errors.hpp"
#include "etlab/image.hpp"
#include "etlab/linalg.hpp"

namespace etlab {

enum class Segment { conditional_image, noisy_target, text };

/// Image tokens plus their grid coordinates and segment labels. The token
/// matrix here is the identity "projection" of each flattened patch; the
/// model applies its learned linear embedding on top.
template <typename T>
struct TokenSequence {
    Mat<T> tokens;                                  // N x (patch_px^2 * 3)
    std::vector<std::pair<int, int>> positions;     // (row, col) per token
    std::vector<Segment> segments;
};

inline std::vector<std::pair<int, int>> grid_positions(int side) {
    std::vector<std::pair<int, int>> pos;
    pos.reserve(static_cast<size_t>(side) * side);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) pos.emplace_back(r, c);
    return pos;
}

/// Flattened patch layout: (py, px, channel), row-major within the patch.
template <typename T>
Mat<T> extract_patches(const Image& img, int patch_px) {
    if (patch_px <= 0 || img.width != img.height || img.width % patch_px != 0)
        throw ShapeError("extract_patches: image does not tile into patches");
    const int side = img.width / patch_px;
    const int patch_dim = patch_px * patch_px * 3;
    Mat<T> out(side * side, patch_dim);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            const int row = r * side + c;
            int k = 0;
            for (int py = 0; py < patch_px; ++py)
                for (int px = 0; px < patch_px; ++px)
                    for (int ch = 0; ch < 3; ++ch)
                        out(row, k++) =
                            static_cast<T>(img.at(r * patch_px + py, c * patch_px + px, ch));
        }
    return out;
}

/// Inverse of extract_patches (exact round trip).
template <typename T>
Image assemble_patches(const Mat<T>& patches, int patch_px) {
    const int n = static_cast<int>(patches.rows());
    int side = 0;
    while (side * side < n) ++side;
    const int patch_dim = patch_px * patch_px * 3;
    if (side * side != n || patches.cols() != patch_dim)
        throw ShapeError("assemble_patches: bad token matrix shape");
    Image img(side * patch_px, side * patch_px);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            const int row = r * side + c;
            int k = 0;
            for (int py = 0; py < patch_px; ++py)
                for (int px = 0; px < patch_px; ++px)
                    for (int ch = 0; ch < 3; ++ch)
                        img.at(r * patch_px + py, c * patch_px + px, ch) =
                            static_cast<float>(patches(row, k++));
        }
    return img;
}

/// Spec-facing patchify: tokens are the (identity-projected) patches of the
/// composite, positions the grid coordinates, segments defaulted to
/// conditional; the flow layer relabels targets.
template <typename T>
TokenSequence<T> patchify(const Image& composite, int patch_px) {
    TokenSequence<T> seq;
    seq.tokens = extract_patches<T>(composite, patch_px);
    const int side = composite.width / patch_px;
    seq.positions = grid_positions(side);
    seq.segments.assign(seq.positions.size(), Segment::conditional_image);
    return seq;
}

/// Pixel [0,1] <-> model space [-1,1].
template <typename T>
Mat<T> to_model_space(Mat<T> patches) {
    return (patches.array() * T(2) - T(1)).matrix();
}
template <typename T>
Mat<T> from_model_space(Mat<T> z) {
    return ((z.array() + T(1)) * T(0.5)).matrix();
}

}  // namespace etlab
