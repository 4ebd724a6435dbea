#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dfa/condmodel.hpp"
#include "dfa/core.hpp"

namespace dfa {

inline constexpr int kModelFormatVersion = 1;

/// Everything needed to replay an experiment from a fitted model: the
/// engine, the normalization applied before fitting, and free-form
/// provenance (split seed, source dataset, ...).
struct ModelDocument {
  Engine engine;
  std::optional<MinMaxStats> normalization;
  std::vector<std::string> feature_names;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const GaussianParams& g);
GaussianParams gaussian_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MixtureModel& m);
MixtureModel mixture_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelDocument& doc);
ModelDocument model_from_json(const nlohmann::json& j);

void save_model(const ModelDocument& doc, const std::filesystem::path& path);
ModelDocument load_model(const std::filesystem::path& path);

}  // namespace dfa
