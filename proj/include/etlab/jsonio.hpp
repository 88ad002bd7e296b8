#pragma once

#include <json.hpp>

#include "etlab/dataset.hpp"
#include "etlab/sprite.hpp"

namespace etlab {

using Json = nlohmann::json;

/// Throws ConfigError when `j` holds keys outside `allowed` (strict
/// configs) or is missing one listed in `required`.
void check_keys(const Json& j, const std::vector<std::string>& allowed,
                const std::vector<std::string>& required, const std::string& context);

Json to_json(const SpriteParams& p);
SpriteParams sprite_params_from_json(const Json& j);

Json to_json(const EditOp& e);
EditOp edit_op_from_json(const Json& j);

Json to_json(const DatasetSpec& s);
DatasetSpec dataset_spec_from_json(const Json& j);

/// Parses a JSON document, rethrowing parse failures as ConfigError with
/// the parser's byte-position diagnostic.
Json parse_json(const std::string& text, const std::string& context);
Json parse_json_file(const std::string& path);

}  // namespace etlab
