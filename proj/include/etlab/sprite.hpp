#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "etlab/image.hpp"

namespace etlab {

enum class Facing { front, left, right };

struct AccessorySet {
    bool hat = false;
    bool ball = false;
    bool earrings = false;

    bool operator==(const AccessorySet&) const = default;
};

using Color = std::array<float, 3>;

/// Limb angle slots, in radians. Angle 0 points straight down; positive
/// angles rotate the limb outward from the body on its own side, pi points
/// straight up. Elbow/knee angles are relative to the parent limb.
enum LimbAngle : int {
    kLeftShoulder = 0,
    kRightShoulder = 1,
    kLeftElbow = 2,
    kRightElbow = 3,
    kLeftHip = 4,
    kRightHip = 5,
    kLeftKnee = 6,
    kRightKnee = 7,
};

/// Full parametric description of one character. Lengths are fractions of
/// the panel height; body_offset is the pelvis anchor in [0,1]^2 panel
/// coordinates (y down). This is the exact ground truth behind every
/// rendered image.
struct SpriteParams {
    double head_radius = 0.08;
    double torso_length = 0.24;
    std::array<double, 8> limb_angles{0.3, 0.3, 0.2, 0.2, 0.12, 0.12, 0.05, 0.05};
    std::array<double, 2> body_offset{0.5, 0.58};
    double scale = 0.7;
    Color shirt_color{0.2f, 0.3f, 0.6f};
    Color pants_color{0.25f, 0.2f, 0.2f};
    Color background_color{0.85f, 0.85f, 0.85f};
    AccessorySet accessories;
    Facing facing = Facing::front;

    bool operator==(const SpriteParams&) const = default;
};

/// One primitive mutation of a SpriteParams field. EditOps hold an ordered
/// list of these; applying an edit replays them in order, so composing
/// edits by concatenation is exactly sequential application.
struct FieldOp {
    enum class Kind {
        set_limb_angle,
        add_limb_angle,
        set_body_offset_x,
        add_body_offset_x,
        set_body_offset_y,
        add_body_offset_y,
        set_scale,
        set_head_radius,
        set_torso_length,
        set_shirt_color,
        set_pants_color,
        set_background_color,
        add_accessory,
        remove_accessory,
        set_facing,
    };

    Kind kind;
    int angle_index = -1;  // for limb angle ops
    double value = 0.0;
    Color color{0.0f, 0.0f, 0.0f};
    std::string accessory;  // "hat" | "ball" | "earrings"
    Facing facing = Facing::front;

    bool operator==(const FieldOp&) const = default;

    /// Canonical name of the field this op can change, e.g.
    /// "limb_angles.left_shoulder" or "accessories.hat".
    std::string touched_field() const;
};

enum class EditCategory { pose, accessory, color };

/// A named, deterministic transformation on SpriteParams.
struct EditOp {
    std::string name;
    EditCategory category = EditCategory::pose;
    std::vector<FieldOp> ops;

    /// Sorted unique field names this edit can change.
    std::vector<std::string> touched_fields() const;

    bool operator==(const EditOp&) const = default;
};

/// Ordered, uniquely-named collection of edits. N_T = size().
struct EditTaxonomy {
    std::vector<EditOp> edits;

    EditTaxonomy() = default;
    explicit EditTaxonomy(std::vector<EditOp> e);

    int size() const { return static_cast<int>(edits.size()); }
    bool contains(const std::string& name) const;
    const EditOp& find(const std::string& name) const;  // throws UnknownEdit
    int index_of(const std::string& name) const;        // throws UnknownEdit

    /// Sub-taxonomy of the named edits, in the given order.
    EditTaxonomy subset(const std::vector<std::string>& names) const;
};

struct CanvasSpec {
    int panel_px = 64;
    int channels = 3;
    int patch_px = 8;  // panels must tile evenly into 2*patch_px blocks
};

void validate_canvas(const CanvasSpec& canvas);

/// The 21 built-in editing types: 17 pose, 3 accessory, 1 color
/// (recolor_shirt, retained for the low-level-attribute limitation probe).
const EditTaxonomy& default_taxonomy();

/// The no-op edit; not part of the default taxonomy.
EditOp identity_edit();

/// default_taxonomy() plus identity appended (useful for classifiers).
EditTaxonomy taxonomy_with_identity(const EditTaxonomy& base);

/// Eight high-contrast pose edits used by the evaluation defaults.
std::vector<std::string> pose_subset_8();

bool edits_disjoint(const EditOp& a, const EditOp& b);

/// Deterministic identity sampler. Uniform draws only, colors snapped to
/// the 8-bit lattice, and enough panel headroom that every taxonomy edit
/// (and disjoint compositions of them) keeps the figure in bounds.
SpriteParams sample_sprite(uint64_t seed);

/// Applies an edit; ranges (angles, scale, colors, offsets) are clamped so
/// the result always satisfies the SpriteParams invariants. Only fields in
/// edit.touched_fields() can differ from the input.
SpriteParams apply_edit(const SpriteParams& params, const EditOp& edit);

/// Looks the edit up by name first (UnknownEdit if absent).
SpriteParams apply_edit(const SpriteParams& params, const std::string& name,
                        const EditTaxonomy& taxonomy);

/// Folds edits into one op whose application equals applying the
/// constituents left-to-right. Throws EmptyComposition on an empty list.
EditOp compose_edits(const std::vector<EditOp>& edits);
EditOp compose_edits(const std::vector<std::string>& names, const EditTaxonomy& taxonomy);

/// Analytic bounding box of the rendered figure in panel coordinates
/// (min_x, min_y, max_x, max_y).
std::array<double, 4> figure_bbox(const SpriteParams& params);

/// Flat-shaded rasterization, no anti-aliasing; deterministic across
/// platforms. Background pixels equal background_color exactly.
/// Throws RenderBounds if the figure does not fit the panel.
Image render_sprite(const SpriteParams& params, const CanvasSpec& canvas);

/// Same, also emitting the exact figure coverage mask (1 = figure pixel).
Image render_sprite_with_mask(const SpriteParams& params, const CanvasSpec& canvas,
                              std::vector<uint8_t>& mask_out);

std::string facing_name(Facing f);
Facing facing_from_name(const std::string& name);

}  // namespace etlab
