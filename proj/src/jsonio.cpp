#include "etlab/jsonio.hpp"

#include <algorithm>
#include <fstream>

#include "etlab/errors.hpp"

namespace etlab {

namespace {

const char* angle_slot_names[8] = {"left_shoulder", "right_shoulder", "left_elbow",
                                   "right_elbow",   "left_hip",       "right_hip",
                                   "left_knee",     "right_knee"};

int angle_slot_index(const std::string& name) {
    for (int i = 0; i < 8; ++i)
        if (name == angle_slot_names[i]) return i;
    throw ConfigError("unknown limb angle slot: " + name);
}

Json color_to_json(const Color& c) { return Json::array({c[0], c[1], c[2]}); }

Color color_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("color must be a 3-element array");
    return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

std::string category_name(EditCategory c) {
    switch (c) {
        case EditCategory::pose: return "pose";
        case EditCategory::accessory: return "accessory";
        case EditCategory::color: return "color";
    }
    throw ConfigError("bad edit category");
}

EditCategory category_from_name(const std::string& s) {
    if (s == "pose") return EditCategory::pose;
    if (s == "accessory") return EditCategory::accessory;
    if (s == "color") return EditCategory::color;
    throw ConfigError("bad edit category: " + s);
}

struct KindName {
    FieldOp::Kind kind;
    const char* name;
};

const KindName kKindNames[] = {
    {FieldOp::Kind::set_limb_angle, "set_limb_angle"},
    {FieldOp::Kind::add_limb_angle, "add_limb_angle"},
    {FieldOp::Kind::set_body_offset_x, "set_body_offset_x"},
    {FieldOp::Kind::add_body_offset_x, "add_body_offset_x"},
    {FieldOp::Kind::set_body_offset_y, "set_body_offset_y"},
    {FieldOp::Kind::add_body_offset_y, "add_body_offset_y"},
    {FieldOp::Kind::set_scale, "set_scale"},
    {FieldOp::Kind::set_head_radius, "set_head_radius"},
    {FieldOp::Kind::set_torso_length, "set_torso_length"},
    {FieldOp::Kind::set_shirt_color, "set_shirt_color"},
    {FieldOp::Kind::set_pants_color, "set_pants_color"},
    {FieldOp::Kind::set_background_color, "set_background_color"},
    {FieldOp::Kind::add_accessory, "add_accessory"},
    {FieldOp::Kind::remove_accessory, "remove_accessory"},
    {FieldOp::Kind::set_facing, "set_facing"},
};

const char* kind_name(FieldOp::Kind k) {
    for (const auto& kn : kKindNames)
        if (kn.kind == k) return kn.name;
    throw ConfigError("bad field op kind");
}

FieldOp::Kind kind_from_name(const std::string& s) {
    for (const auto& kn : kKindNames)
        if (s == kn.name) return kn.kind;
    throw ConfigError("bad field op kind: " + s);
}

bool kind_is_angle(FieldOp::Kind k) {
    return k == FieldOp::Kind::set_limb_angle || k == FieldOp::Kind::add_limb_angle;
}
bool kind_is_color(FieldOp::Kind k) {
    return k == FieldOp::Kind::set_shirt_color || k == FieldOp::Kind::set_pants_color ||
           k == FieldOp::Kind::set_background_color;
}
bool kind_is_accessory(FieldOp::Kind k) {
    return k == FieldOp::Kind::add_accessory || k == FieldOp::Kind::remove_accessory;
}
bool kind_is_scalar(FieldOp::Kind k) {
    switch (k) {
        case FieldOp::Kind::set_body_offset_x:
        case FieldOp::Kind::add_body_offset_x:
        case FieldOp::Kind::set_body_offset_y:
        case FieldOp::Kind::add_body_offset_y:
        case FieldOp::Kind::set_scale:
        case FieldOp::Kind::set_head_radius:
        case FieldOp::Kind::set_torso_length: return true;
        default: return false;
    }
}

}  // namespace

void check_keys(const Json& j, const std::vector<std::string>& allowed,
                const std::vector<std::string>& required, const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const auto& k : allowed)
            if (item.key() == k) ok = true;
        if (!ok) throw ConfigError(context + ": unknown key '" + item.key() + "'");
    }
    for (const auto& k : required)
        if (!j.contains(k)) throw ConfigError(context + ": missing key '" + k + "'");
}

Json to_json(const SpriteParams& p) {
    Json j;
    j["head_radius"] = p.head_radius;
    j["torso_length"] = p.torso_length;
    j["limb_angles"] = p.limb_angles;
    j["body_offset"] = p.body_offset;
    j["scale"] = p.scale;
    j["shirt_color"] = color_to_json(p.shirt_color);
    j["pants_color"] = color_to_json(p.pants_color);
    j["background_color"] = color_to_json(p.background_color);
    Json acc = Json::array();
    if (p.accessories.hat) acc.push_back("hat");
    if (p.accessories.ball) acc.push_back("ball");
    if (p.accessories.earrings) acc.push_back("earrings");
    j["accessories"] = acc;
    j["facing"] = facing_name(p.facing);
    return j;
}

SpriteParams sprite_params_from_json(const Json& j) {
    check_keys(j,
               {"head_radius", "torso_length", "limb_angles", "body_offset", "scale",
                "shirt_color", "pants_color", "background_color", "accessories", "facing"},
               {"head_radius", "torso_length", "limb_angles", "body_offset", "scale",
                "shirt_color", "pants_color", "background_color", "accessories", "facing"},
               "SpriteParams");
    SpriteParams p;
    p.head_radius = j["head_radius"].get<double>();
    p.torso_length = j["torso_length"].get<double>();
    if (j["limb_angles"].size() != 8) throw ConfigError("limb_angles must have 8 entries");
    for (int i = 0; i < 8; ++i) p.limb_angles[i] = j["limb_angles"][i].get<double>();
    if (j["body_offset"].size() != 2) throw ConfigError("body_offset must have 2 entries");
    p.body_offset[0] = j["body_offset"][0].get<double>();
    p.body_offset[1] = j["body_offset"][1].get<double>();
    p.scale = j["scale"].get<double>();
    p.shirt_color = color_from_json(j["shirt_color"]);
    p.pants_color = color_from_json(j["pants_color"]);
    p.background_color = color_from_json(j["background_color"]);
    p.accessories = {};
    for (const auto& a : j["accessories"]) {
        const std::string name = a.get<std::string>();
        if (name == "hat") p.accessories.hat = true;
        else if (name == "ball") p.accessories.ball = true;
        else if (name == "earrings") p.accessories.earrings = true;
        else throw ConfigError("unknown accessory: " + name);
    }
    p.facing = facing_from_name(j["facing"].get<std::string>());
    return p;
}

Json to_json(const EditOp& e) {
    Json ops = Json::array();
    for (const FieldOp& op : e.ops) {
        Json o;
        o["op"] = kind_name(op.kind);
        if (kind_is_angle(op.kind)) {
            o["slot"] = angle_slot_names[op.angle_index];
            o["value"] = op.value;
        } else if (kind_is_color(op.kind)) {
            o["color"] = color_to_json(op.color);
        } else if (kind_is_accessory(op.kind)) {
            o["accessory"] = op.accessory;
        } else if (op.kind == FieldOp::Kind::set_facing) {
            o["facing"] = facing_name(op.facing);
        } else {
            o["value"] = op.value;
        }
        ops.push_back(o);
    }
    Json j;
    j["name"] = e.name;
    j["category"] = category_name(e.category);
    j["ops"] = ops;
    j["touched_fields"] = e.touched_fields();
    return j;
}

EditOp edit_op_from_json(const Json& j) {
    check_keys(j, {"name", "category", "ops", "touched_fields"}, {"name", "category", "ops"},
               "EditOp");
    EditOp e;
    e.name = j["name"].get<std::string>();
    e.category = category_from_name(j["category"].get<std::string>());
    for (const auto& o : j["ops"]) {
        FieldOp op;
        op.kind = kind_from_name(o["op"].get<std::string>());
        if (kind_is_angle(op.kind)) {
            op.angle_index = angle_slot_index(o["slot"].get<std::string>());
            op.value = o["value"].get<double>();
        } else if (kind_is_color(op.kind)) {
            op.color = color_from_json(o["color"]);
        } else if (kind_is_accessory(op.kind)) {
            op.accessory = o["accessory"].get<std::string>();
        } else if (op.kind == FieldOp::Kind::set_facing) {
            op.facing = facing_from_name(o["facing"].get<std::string>());
        } else if (kind_is_scalar(op.kind)) {
            op.value = o["value"].get<double>();
        }
        e.ops.push_back(op);
    }
    if (j.contains("touched_fields")) {
        const auto expect = e.touched_fields();
        std::vector<std::string> listed = j["touched_fields"].get<std::vector<std::string>>();
        std::sort(listed.begin(), listed.end());
        if (listed != expect)
            throw ConfigError("EditOp touched_fields does not match ops: " + e.name);
    }
    return e;
}

Json to_json(const DatasetSpec& s) {
    Json j;
    j["edits"] = s.edits;
    j["n_t"] = s.n_t();
    j["n_c"] = s.n_c;
    j["panel_px"] = s.panel_px;
    j["global_seed"] = s.global_seed;
    j["compositions"] = s.compositions;
    return j;
}

DatasetSpec dataset_spec_from_json(const Json& j) {
    check_keys(j, {"edits", "n_t", "n_c", "panel_px", "global_seed", "compositions"},
               {"edits", "n_c"}, "DatasetSpec");
    DatasetSpec s;
    s.edits = j["edits"].get<std::vector<std::string>>();
    s.n_c = j["n_c"].get<int>();
    if (j.contains("panel_px")) s.panel_px = j["panel_px"].get<int>();
    if (j.contains("global_seed")) s.global_seed = j["global_seed"].get<uint64_t>();
    if (j.contains("compositions"))
        s.compositions = j["compositions"].get<std::vector<std::vector<std::string>>>();
    if (j.contains("n_t") && j["n_t"].get<int>() != s.n_t())
        throw ConfigError("DatasetSpec: n_t does not match edits length");
    s.validate();
    return s;
}

Json parse_json(const std::string& text, const std::string& context) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(context + ": " + e.what());
    }
}

Json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_json(text, path);
}

}  // namespace etlab
