#include "etlab/sprite.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "etlab/errors.hpp"
#include "etlab/rng.hpp"

namespace etlab {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Renderer-side sine/cosine. libm sin/cos are not bit-pinned across
// platforms, and rendered pixels feed hash-stable dataset manifests, so the
// renderer uses its own polynomial evaluation (mul/add only; the library is
// compiled with -ffp-contract=off).
double sin_half(double x) {  // |x| <= pi/2
    const double x2 = x * x;
    return x * (1.0 -
                x2 * (1.0 / 6.0 -
                      x2 * (1.0 / 120.0 -
                            x2 * (1.0 / 5040.0 -
                                  x2 * (1.0 / 362880.0 -
                                        x2 * (1.0 / 39916800.0 -
                                              x2 * (1.0 / 6227020800.0 -
                                                    x2 * (1.0 / 1307674368000.0))))))));
}

double cos_half(double x) {  // |x| <= pi/2
    const double x2 = x * x;
    return 1.0 -
           x2 * (0.5 -
                 x2 * (1.0 / 24.0 -
                       x2 * (1.0 / 720.0 -
                             x2 * (1.0 / 40320.0 -
                                   x2 * (1.0 / 3628800.0 -
                                         x2 * (1.0 / 479001600.0 -
                                               x2 * (1.0 / 87178291200.0)))))));
}

double reduce_angle(double x) {
    while (x > kPi) x -= 2.0 * kPi;
    while (x < -kPi) x += 2.0 * kPi;
    return x;
}

double det_sin(double x) {
    x = reduce_angle(x);
    if (x > kPi / 2.0) x = kPi - x;
    else if (x < -kPi / 2.0) x = -kPi - x;
    return sin_half(x);
}

double det_cos(double x) {
    x = reduce_angle(x);
    double sign = 1.0;
    if (x > kPi / 2.0) {
        x = kPi - x;
        sign = -1.0;
    } else if (x < -kPi / 2.0) {
        x = -kPi - x;
        sign = -1.0;
    }
    return sign * cos_half(x);
}

inline Color rgb8(int r, int g, int b) {
    return {static_cast<float>(r) / 255.0f, static_cast<float>(g) / 255.0f,
            static_cast<float>(b) / 255.0f};
}

// Fixed part colors, all on the 8-bit lattice so rendered images are
// already quantized.
const Color kSkin = rgb8(243, 202, 166);
const Color kEye = rgb8(22, 22, 28);
const Color kHat = rgb8(40, 40, 58);
const Color kBall = rgb8(235, 122, 26);
const Color kEarring = rgb8(242, 217, 64);
const Color kRecolorShirt = rgb8(217, 26, 26);

// Skeleton proportions (local units; pelvis at origin, y down).
constexpr double kUpperArm = 0.11;
constexpr double kForearm = 0.10;
constexpr double kThigh = 0.13;
constexpr double kShin = 0.12;
constexpr double kTorsoR = 0.045;
constexpr double kArmR = 0.018;
constexpr double kLegR = 0.022;
constexpr double kShoulderX = 0.035;
constexpr double kHipX = 0.028;
constexpr double kNeckGap = 0.01;

// Capsule; a disc when the endpoints coincide.
struct Prim {
    double ax, ay, bx, by, r;
    Color color;
};

Prim disc(double cx, double cy, double r, Color c) { return {cx, cy, cx, cy, r, c}; }
Prim capsule(double ax, double ay, double bx, double by, double r, Color c) {
    return {ax, ay, bx, by, r, c};
}

// Limb direction for a limb-angle value: 0 = down, +pi/2 = outward
// horizontal on the limb's own side.
inline void limb_dir(bool left_side, double angle, double& dx, double& dy) {
    const double s = det_sin(angle);
    dx = left_side ? -s : s;
    dy = det_cos(angle);
}

void append_two_segment_limb(std::vector<Prim>& prims, bool left_side, double jx, double jy,
                             double angle0, double angle1_rel, double len0, double len1, double r,
                             Color c, double* end_x = nullptr, double* end_y = nullptr,
                             double* end_dx = nullptr, double* end_dy = nullptr) {
    double d0x, d0y, d1x, d1y;
    limb_dir(left_side, angle0, d0x, d0y);
    limb_dir(left_side, angle0 + angle1_rel, d1x, d1y);
    const double mx = jx + len0 * d0x;
    const double my = jy + len0 * d0y;
    const double ex = mx + len1 * d1x;
    const double ey = my + len1 * d1y;
    prims.push_back(capsule(jx, jy, mx, my, r, c));
    prims.push_back(capsule(mx, my, ex, ey, r, c));
    if (end_x) *end_x = ex;
    if (end_y) *end_y = ey;
    if (end_dx) *end_dx = d1x;
    if (end_dy) *end_dy = d1y;
}

// Figure primitives in local coordinates, painter order.
std::vector<Prim> build_figure(const SpriteParams& p) {
    std::vector<Prim> prims;
    prims.reserve(20);

    const double tl = p.torso_length;
    const double hr = p.head_radius;
    const auto& a = p.limb_angles;

    // torso
    prims.push_back(capsule(0.0, -tl, 0.0, 0.0, kTorsoR, p.shirt_color));

    // legs
    append_two_segment_limb(prims, true, -kHipX, 0.0, a[kLeftHip], a[kLeftKnee], kThigh, kShin,
                            kLegR, p.pants_color);
    append_two_segment_limb(prims, false, kHipX, 0.0, a[kRightHip], a[kRightKnee], kThigh, kShin,
                            kLegR, p.pants_color);

    // arms; remember the right wrist for the ball accessory
    append_two_segment_limb(prims, true, -kShoulderX, -tl, a[kLeftShoulder], a[kLeftElbow],
                            kUpperArm, kForearm, kArmR, p.shirt_color);
    double wrist_x, wrist_y, wrist_dx, wrist_dy;
    append_two_segment_limb(prims, false, kShoulderX, -tl, a[kRightShoulder], a[kRightElbow],
                            kUpperArm, kForearm, kArmR, p.shirt_color, &wrist_x, &wrist_y,
                            &wrist_dx, &wrist_dy);

    // head, shifted sideways when the figure turns
    double head_dx = 0.0;
    if (p.facing == Facing::left) head_dx = -0.22 * hr;
    if (p.facing == Facing::right) head_dx = 0.22 * hr;
    const double head_cx = head_dx;
    const double head_cy = -(tl + kNeckGap + hr);
    prims.push_back(disc(head_cx, head_cy, hr, kSkin));

    // eyes
    double eye_shift = 0.0;
    if (p.facing == Facing::left) eye_shift = -0.30 * hr;
    if (p.facing == Facing::right) eye_shift = 0.30 * hr;
    const double eye_y = head_cy - 0.18 * hr;
    prims.push_back(disc(head_cx - 0.42 * hr + eye_shift, eye_y, 0.15 * hr, kEye));
    prims.push_back(disc(head_cx + 0.42 * hr + eye_shift, eye_y, 0.15 * hr, kEye));

    if (p.accessories.hat) {
        const double brim_y = head_cy - 0.72 * hr;
        prims.push_back(capsule(head_cx - 1.25 * hr, brim_y, head_cx + 1.25 * hr, brim_y, 0.013,
                                kHat));
        prims.push_back(capsule(head_cx, brim_y - 0.012, head_cx, brim_y - 0.055, 0.5 * hr, kHat));
    }
    if (p.accessories.earrings) {
        const double ey = head_cy + 0.22 * hr;
        prims.push_back(disc(head_cx - (hr + 0.010), ey, 0.015, kEarring));
        prims.push_back(disc(head_cx + (hr + 0.010), ey, 0.015, kEarring));
    }
    if (p.accessories.ball) {
        const double bx = wrist_x + 0.038 * wrist_dx;
        const double by = wrist_y + 0.038 * wrist_dy;
        prims.push_back(disc(bx, by, 0.034, kBall));
    }
    return prims;
}

inline double dist2_to_prim(double u, double v, const Prim& q) {
    const double ex = q.bx - q.ax;
    const double ey = q.by - q.ay;
    double dx = u - q.ax;
    double dy = v - q.ay;
    const double len2 = ex * ex + ey * ey;
    if (len2 > 0.0) {
        double t = (dx * ex + dy * ey) / len2;
        if (t < 0.0) t = 0.0;
        if (t > 1.0) t = 1.0;
        dx -= t * ex;
        dy -= t * ey;
    }
    return dx * dx + dy * dy;
}

std::array<double, 4> local_bbox(const std::vector<Prim>& prims) {
    double minx = 1e9, miny = 1e9, maxx = -1e9, maxy = -1e9;
    for (const Prim& q : prims) {
        minx = std::min({minx, q.ax - q.r, q.bx - q.r});
        maxx = std::max({maxx, q.ax + q.r, q.bx + q.r});
        miny = std::min({miny, q.ay - q.r, q.by - q.r});
        maxy = std::max({maxy, q.ay + q.r, q.by + q.r});
    }
    return {minx, miny, maxx, maxy};
}

double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }
float clampf(float v, float lo, float hi) { return v < lo ? lo : (v > hi ? hi : v); }

void clamp_color(Color& c) {
    for (float& ch : c) ch = clampf(ch, 0.0f, 1.0f);
}

const char* angle_field_name(int index) {
    switch (index) {
        case kLeftShoulder: return "limb_angles.left_shoulder";
        case kRightShoulder: return "limb_angles.right_shoulder";
        case kLeftElbow: return "limb_angles.left_elbow";
        case kRightElbow: return "limb_angles.right_elbow";
        case kLeftHip: return "limb_angles.left_hip";
        case kRightHip: return "limb_angles.right_hip";
        case kLeftKnee: return "limb_angles.left_knee";
        case kRightKnee: return "limb_angles.right_knee";
        default: throw UsageError("bad limb angle index");
    }
}

FieldOp set_angle(int index, double v) {
    FieldOp op;
    op.kind = FieldOp::Kind::set_limb_angle;
    op.angle_index = index;
    op.value = v;
    return op;
}

FieldOp add_offset_y(double v) {
    FieldOp op;
    op.kind = FieldOp::Kind::add_body_offset_y;
    op.value = v;
    return op;
}

FieldOp set_scale_op(double v) {
    FieldOp op;
    op.kind = FieldOp::Kind::set_scale;
    op.value = v;
    return op;
}

FieldOp add_accessory(const std::string& name) {
    FieldOp op;
    op.kind = FieldOp::Kind::add_accessory;
    op.accessory = name;
    return op;
}

FieldOp set_facing_op(Facing f) {
    FieldOp op;
    op.kind = FieldOp::Kind::set_facing;
    op.facing = f;
    return op;
}

FieldOp set_shirt(Color c) {
    FieldOp op;
    op.kind = FieldOp::Kind::set_shirt_color;
    op.color = c;
    return op;
}

EditOp make_edit(std::string name, EditCategory cat, std::vector<FieldOp> ops) {
    EditOp e;
    e.name = std::move(name);
    e.category = cat;
    e.ops = std::move(ops);
    return e;
}

std::vector<EditOp> build_default_edits() {
    using C = EditCategory;
    std::vector<EditOp> v;
    v.push_back(make_edit("raise_left_arm", C::pose,
                          {set_angle(kLeftShoulder, 2.70), set_angle(kLeftElbow, 0.05)}));
    v.push_back(make_edit("raise_right_arm", C::pose,
                          {set_angle(kRightShoulder, 2.70), set_angle(kRightElbow, 0.05)}));
    v.push_back(make_edit("raise_both_arms", C::pose,
                          {set_angle(kLeftShoulder, 2.70), set_angle(kLeftElbow, 0.05),
                           set_angle(kRightShoulder, 2.70), set_angle(kRightElbow, 0.05)}));
    v.push_back(make_edit("spread_arms", C::pose,
                          {set_angle(kLeftShoulder, 1.5708), set_angle(kLeftElbow, 0.04),
                           set_angle(kRightShoulder, 1.5708), set_angle(kRightElbow, 0.04)}));
    v.push_back(make_edit("wave", C::pose,
                          {set_angle(kRightShoulder, 2.40), set_angle(kRightElbow, 1.30)}));
    v.push_back(make_edit("bend_elbows", C::pose,
                          {set_angle(kLeftElbow, 1.60), set_angle(kRightElbow, 1.60)}));
    v.push_back(make_edit("cross_arms", C::pose,
                          {set_angle(kLeftShoulder, -0.55), set_angle(kLeftElbow, 0.25),
                           set_angle(kRightShoulder, -0.55), set_angle(kRightElbow, 0.25)}));
    v.push_back(make_edit("kick_left", C::pose,
                          {set_angle(kLeftHip, 1.10), set_angle(kLeftKnee, 0.08)}));
    v.push_back(make_edit("kick_right", C::pose,
                          {set_angle(kRightHip, 1.10), set_angle(kRightKnee, 0.08)}));
    v.push_back(make_edit("sit", C::pose,
                          {set_angle(kLeftHip, 1.35), set_angle(kLeftKnee, -1.35),
                           set_angle(kRightHip, 1.35), set_angle(kRightKnee, -1.35),
                           add_offset_y(0.10)}));
    v.push_back(make_edit("crouch", C::pose,
                          {set_angle(kLeftHip, 0.55), set_angle(kLeftKnee, -0.95),
                           set_angle(kRightHip, 0.55), set_angle(kRightKnee, -0.95),
                           add_offset_y(0.12)}));
    v.push_back(make_edit("jump", C::pose,
                          {set_angle(kLeftHip, 0.65), set_angle(kLeftKnee, 1.20),
                           set_angle(kRightHip, 0.65), set_angle(kRightKnee, 1.20),
                           add_offset_y(-0.10)}));
    v.push_back(make_edit("split_legs", C::pose,
                          {set_angle(kLeftHip, 0.85), set_angle(kLeftKnee, 0.03),
                           set_angle(kRightHip, 0.85), set_angle(kRightKnee, 0.03)}));
    v.push_back(make_edit("cross_legs", C::pose,
                          {set_angle(kLeftHip, -0.40), set_angle(kLeftKnee, 0.18),
                           set_angle(kRightHip, -0.40), set_angle(kRightKnee, 0.18)}));
    v.push_back(make_edit("turn_left", C::pose, {set_facing_op(Facing::left)}));
    v.push_back(make_edit("turn_right", C::pose, {set_facing_op(Facing::right)}));
    v.push_back(make_edit("shrink", C::pose, {set_scale_op(0.45)}));
    v.push_back(make_edit("add_hat", C::accessory, {add_accessory("hat")}));
    v.push_back(make_edit("add_ball", C::accessory, {add_accessory("ball")}));
    v.push_back(make_edit("add_earrings", C::accessory, {add_accessory("earrings")}));
    v.push_back(make_edit("recolor_shirt", C::color, {set_shirt(kRecolorShirt)}));
    return v;
}

}  // namespace

std::string FieldOp::touched_field() const {
    switch (kind) {
        case Kind::set_limb_angle:
        case Kind::add_limb_angle: return angle_field_name(angle_index);
        case Kind::set_body_offset_x:
        case Kind::add_body_offset_x: return "body_offset.x";
        case Kind::set_body_offset_y:
        case Kind::add_body_offset_y: return "body_offset.y";
        case Kind::set_scale: return "scale";
        case Kind::set_head_radius: return "head_radius";
        case Kind::set_torso_length: return "torso_length";
        case Kind::set_shirt_color: return "shirt_color";
        case Kind::set_pants_color: return "pants_color";
        case Kind::set_background_color: return "background_color";
        case Kind::add_accessory:
        case Kind::remove_accessory: return "accessories." + accessory;
        case Kind::set_facing: return "facing";
    }
    throw UsageError("bad field op kind");
}

std::vector<std::string> EditOp::touched_fields() const {
    std::set<std::string> fields;
    for (const FieldOp& op : ops) fields.insert(op.touched_field());
    return {fields.begin(), fields.end()};
}

EditTaxonomy::EditTaxonomy(std::vector<EditOp> e) : edits(std::move(e)) {
    if (edits.empty()) throw UsageError("taxonomy must contain at least one edit");
    std::set<std::string> names;
    for (const EditOp& op : edits)
        if (!names.insert(op.name).second)
            throw UsageError("duplicate edit name in taxonomy: " + op.name);
}

bool EditTaxonomy::contains(const std::string& name) const {
    for (const EditOp& e : edits)
        if (e.name == name) return true;
    return false;
}

const EditOp& EditTaxonomy::find(const std::string& name) const {
    for (const EditOp& e : edits)
        if (e.name == name) return e;
    throw UnknownEdit("unknown edit: " + name);
}

int EditTaxonomy::index_of(const std::string& name) const {
    for (size_t i = 0; i < edits.size(); ++i)
        if (edits[i].name == name) return static_cast<int>(i);
    throw UnknownEdit("unknown edit: " + name);
}

EditTaxonomy EditTaxonomy::subset(const std::vector<std::string>& names) const {
    std::vector<EditOp> out;
    out.reserve(names.size());
    for (const std::string& n : names) out.push_back(find(n));
    return EditTaxonomy(std::move(out));
}

void validate_canvas(const CanvasSpec& canvas) {
    if (canvas.channels != 3) throw UsageError("canvas must have 3 channels");
    if (canvas.panel_px <= 0 || canvas.patch_px <= 0)
        throw UsageError("canvas dimensions must be positive");
    if (canvas.panel_px % (2 * canvas.patch_px) != 0)
        throw UsageError("panel_px must be divisible by 2*patch_px");
}

const EditTaxonomy& default_taxonomy() {
    static const EditTaxonomy taxonomy{build_default_edits()};
    return taxonomy;
}

EditOp identity_edit() { return make_edit("identity", EditCategory::pose, {}); }

EditTaxonomy taxonomy_with_identity(const EditTaxonomy& base) {
    std::vector<EditOp> edits = base.edits;
    edits.push_back(identity_edit());
    return EditTaxonomy(std::move(edits));
}

std::vector<std::string> pose_subset_8() {
    return {"raise_left_arm", "raise_right_arm", "raise_both_arms", "spread_arms",
            "kick_left",      "kick_right",      "jump",            "crouch"};
}

bool edits_disjoint(const EditOp& a, const EditOp& b) {
    const auto fa = a.touched_fields();
    const auto fb = b.touched_fields();
    for (const auto& f : fa)
        if (std::find(fb.begin(), fb.end(), f) != fb.end()) return false;
    return true;
}

SpriteParams sample_sprite(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5350524954ull));  // "SPRIT"
    SpriteParams p;
    p.head_radius = rng.uniform(0.065, 0.095);
    p.torso_length = rng.uniform(0.20, 0.27);
    p.limb_angles[kLeftShoulder] = rng.uniform(0.12, 0.50);
    p.limb_angles[kRightShoulder] = rng.uniform(0.12, 0.50);
    p.limb_angles[kLeftElbow] = rng.uniform(0.05, 0.45);
    p.limb_angles[kRightElbow] = rng.uniform(0.05, 0.45);
    p.limb_angles[kLeftHip] = rng.uniform(0.06, 0.26);
    p.limb_angles[kRightHip] = rng.uniform(0.06, 0.26);
    p.limb_angles[kLeftKnee] = rng.uniform(0.00, 0.28);
    p.limb_angles[kRightKnee] = rng.uniform(0.00, 0.28);
    p.body_offset[0] = rng.uniform(0.30, 0.70);
    p.body_offset[1] = rng.uniform(0.555, 0.640);
    p.scale = rng.uniform(0.55, 0.80);
    auto sample_color = [&](double lo, double hi) {
        Color c;
        for (int i = 0; i < 3; ++i)
            c[i] = dequantize_channel(quantize_channel(static_cast<float>(rng.uniform(lo, hi))));
        return c;
    };
    p.shirt_color = sample_color(0.05, 0.70);
    p.pants_color = sample_color(0.05, 0.70);
    p.background_color = sample_color(0.78, 0.95);
    p.accessories = {};
    p.facing = Facing::front;
    return p;
}

SpriteParams apply_edit(const SpriteParams& params, const EditOp& edit) {
    SpriteParams p = params;
    for (const FieldOp& op : edit.ops) {
        switch (op.kind) {
            case FieldOp::Kind::set_limb_angle:
                p.limb_angles[op.angle_index] = clamp(op.value, -kPi, kPi);
                break;
            case FieldOp::Kind::add_limb_angle:
                p.limb_angles[op.angle_index] =
                    clamp(p.limb_angles[op.angle_index] + op.value, -kPi, kPi);
                break;
            case FieldOp::Kind::set_body_offset_x:
                p.body_offset[0] = clamp(op.value, 0.0, 1.0);
                break;
            case FieldOp::Kind::add_body_offset_x:
                p.body_offset[0] = clamp(p.body_offset[0] + op.value, 0.0, 1.0);
                break;
            case FieldOp::Kind::set_body_offset_y:
                p.body_offset[1] = clamp(op.value, 0.0, 1.0);
                break;
            case FieldOp::Kind::add_body_offset_y:
                p.body_offset[1] = clamp(p.body_offset[1] + op.value, 0.0, 1.0);
                break;
            case FieldOp::Kind::set_scale:
                p.scale = clamp(op.value, 0.201, 1.5);
                break;
            case FieldOp::Kind::set_head_radius:
                p.head_radius = clamp(op.value, 0.03, 0.12);
                break;
            case FieldOp::Kind::set_torso_length:
                p.torso_length = clamp(op.value, 0.10, 0.35);
                break;
            case FieldOp::Kind::set_shirt_color:
                p.shirt_color = op.color;
                clamp_color(p.shirt_color);
                break;
            case FieldOp::Kind::set_pants_color:
                p.pants_color = op.color;
                clamp_color(p.pants_color);
                break;
            case FieldOp::Kind::set_background_color:
                p.background_color = op.color;
                clamp_color(p.background_color);
                break;
            case FieldOp::Kind::add_accessory:
            case FieldOp::Kind::remove_accessory: {
                const bool add = op.kind == FieldOp::Kind::add_accessory;
                if (op.accessory == "hat") p.accessories.hat = add;
                else if (op.accessory == "ball") p.accessories.ball = add;
                else if (op.accessory == "earrings") p.accessories.earrings = add;
                else throw UsageError("unknown accessory: " + op.accessory);
                break;
            }
            case FieldOp::Kind::set_facing:
                p.facing = op.facing;
                break;
        }
    }
    return p;
}

SpriteParams apply_edit(const SpriteParams& params, const std::string& name,
                        const EditTaxonomy& taxonomy) {
    if (name == "identity") return apply_edit(params, identity_edit());
    return apply_edit(params, taxonomy.find(name));
}

EditOp compose_edits(const std::vector<EditOp>& edits) {
    if (edits.empty()) throw EmptyComposition("compose_edits: empty edit list");
    EditOp out;
    out.category = edits.front().category;
    for (size_t i = 0; i < edits.size(); ++i) {
        if (i) out.name += "+";
        out.name += edits[i].name;
        out.ops.insert(out.ops.end(), edits[i].ops.begin(), edits[i].ops.end());
    }
    return out;
}

EditOp compose_edits(const std::vector<std::string>& names, const EditTaxonomy& taxonomy) {
    if (names.empty()) throw EmptyComposition("compose_edits: empty name list");
    std::vector<EditOp> edits;
    edits.reserve(names.size());
    for (const std::string& n : names)
        edits.push_back(n == "identity" ? identity_edit() : taxonomy.find(n));
    return compose_edits(edits);
}

std::array<double, 4> figure_bbox(const SpriteParams& params) {
    const auto prims = build_figure(params);
    const auto lb = local_bbox(prims);
    const double ox = params.body_offset[0];
    const double oy = params.body_offset[1];
    const double s = params.scale;
    return {ox + s * lb[0], oy + s * lb[1], ox + s * lb[2], oy + s * lb[3]};
}

Image render_sprite_with_mask(const SpriteParams& params, const CanvasSpec& canvas,
                              std::vector<uint8_t>& mask_out) {
    validate_canvas(canvas);
    const auto bbox = figure_bbox(params);
    if (bbox[0] < 0.0 || bbox[1] < 0.0 || bbox[2] > 1.0 || bbox[3] > 1.0)
        throw RenderBounds("figure bounding box outside panel");

    const int n = canvas.panel_px;
    const auto prims = build_figure(params);
    Image img(n, n);
    mask_out.assign(static_cast<size_t>(n) * n, 0);

    const double inv_n = 1.0 / static_cast<double>(n);
    const double ox = params.body_offset[0];
    const double oy = params.body_offset[1];
    const double inv_s = 1.0 / params.scale;

    for (int y = 0; y < n; ++y) {
        const double py = ((static_cast<double>(y) + 0.5) * inv_n - oy) * inv_s;
        for (int x = 0; x < n; ++x) {
            const double px = ((static_cast<double>(x) + 0.5) * inv_n - ox) * inv_s;
            const Color* color = &params.background_color;
            bool covered = false;
            for (const Prim& q : prims) {
                if (dist2_to_prim(px, py, q) <= q.r * q.r) {
                    color = &q.color;
                    covered = true;
                }
            }
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = (*color)[c];
            if (covered) mask_out[static_cast<size_t>(y) * n + x] = 1;
        }
    }
    return img;
}

Image render_sprite(const SpriteParams& params, const CanvasSpec& canvas) {
    std::vector<uint8_t> mask;
    return render_sprite_with_mask(params, canvas, mask);
}

std::string facing_name(Facing f) {
    switch (f) {
        case Facing::front: return "front";
        case Facing::left: return "left";
        case Facing::right: return "right";
    }
    throw UsageError("bad facing value");
}

Facing facing_from_name(const std::string& name) {
    if (name == "front") return Facing::front;
    if (name == "left") return Facing::left;
    if (name == "right") return Facing::right;
    throw UsageError("bad facing name: " + name);
}

}  // namespace etlab
