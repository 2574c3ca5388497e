#pragma once

#include "dynsur/narx.hpp"

#include "json.hpp"

#include <filesystem>

namespace dynsur::io {

using nlohmann::json;

inline constexpr const char* kModelSchema = "dynsur.surrogate/1";

json stage_to_json(const narx::StageSpec& stage);
narx::StageSpec stage_from_json(const json& j);

json spec_to_json(const narx::SurrogateSpec& spec);
/// Throws ConfigError on missing or mistyped fields.
narx::SurrogateSpec spec_from_json(const json& j);

json pca_to_json(const features::PcaMap& map);
features::PcaMap pca_from_json(const json& j);

json model_to_json(const narx::FittedSurrogate& model);
narx::FittedSurrogate model_from_json(const json& j);

void save_model(const std::filesystem::path& path, const narx::FittedSurrogate& model);
narx::FittedSurrogate load_model(const std::filesystem::path& path);

/// Parses a JSON document that may contain // and /* */ comments.
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace dynsur::io
