#include "dfa/model_io.hpp"

#include <fstream>

namespace dfa {

using nlohmann::json;

json to_json(const GaussianParams& g) {
  json cov = json::array();
  for (Eigen::Index r = 0; r < g.cov.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cov.cols(); ++c) cov.push_back(g.cov(r, c));
  return {{"mean", std::vector<double>(g.mean.data(), g.mean.data() + g.mean.size())}, {"cov", cov}};
}

GaussianParams gaussian_from_json(const json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto cov = j.at("cov").get<std::vector<double>>();
  const auto d = static_cast<Eigen::Index>(mean.size());
  if (static_cast<Eigen::Index>(cov.size()) != d * d)
    throw Error(ErrorCode::DimensionMismatch, "covariance must have d*d row-major entries");
  GaussianParams g;
  g.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
  g.cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cov.data(), d, d);
  return g;
}

json to_json(const MixtureModel& m) {
  json comps = json::array();
  for (const auto& c : m.components) comps.push_back(to_json(c));
  return {{"weights", m.weights}, {"components", comps}};
}

MixtureModel mixture_from_json(const json& j) {
  MixtureModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  for (const auto& c : j.at("components")) m.components.push_back(gaussian_from_json(c));
  m.validate();
  return m;
}

json to_json(const ModelDocument& doc) {
  const Engine& e = doc.engine;
  json out;
  out["format"] = "dfa-model";
  out["version"] = kModelFormatVersion;
  out["engine"] = e.spec().to_string();
  if (e.is_classification()) {
    const auto& ccm = e.classes();
    out["task"] = {{"kind", "classification"}, {"num_classes", ccm.num_classes()}};
    out["class_prior"] = ccm.class_prior;
    json models = json::array();
    for (const auto& m : ccm.per_class) models.push_back(to_json(m));
    out["class_models"] = models;
  } else {
    out["task"] = {{"kind", "regression"}, {"target_index", e.joint().target_slot}};
    out["joint_model"] = to_json(e.joint().density);
  }
  if (doc.normalization) {
    const auto& s = *doc.normalization;
    out["normalization"] = {{"min", std::vector<double>(s.min.data(), s.min.data() + s.min.size())},
                            {"max", std::vector<double>(s.max.data(), s.max.data() + s.max.size())}};
  } else {
    out["normalization"] = nullptr;
  }
  out["feature_names"] = doc.feature_names;
  out["metadata"] = doc.metadata;
  return out;
}

ModelDocument model_from_json(const json& j) {
  if (j.value("format", "") != "dfa-model") throw Error(ErrorCode::ParseError, "not a dfa model document");
  const int version = j.at("version").get<int>();
  if (version != kModelFormatVersion)
    throw Error(ErrorCode::ParseError, "unsupported model version " + std::to_string(version));
  const EngineSpec spec = EngineSpec::parse(j.at("engine").get<std::string>());
  const auto& task = j.at("task");
  ModelDocument doc;
  if (task.at("kind") == "classification") {
    ClassConditionalModel ccm;
    ccm.class_prior = j.at("class_prior").get<std::vector<double>>();
    for (const auto& m : j.at("class_models")) ccm.per_class.push_back(mixture_from_json(m));
    ccm.validate();
    if (ccm.num_classes() != task.at("num_classes").get<int>())
      throw Error(ErrorCode::DimensionMismatch, "class count disagrees with class models");
    doc.engine = Engine(std::move(ccm), spec);
  } else if (task.at("kind") == "regression") {
    JointModel joint;
    joint.target_slot = task.at("target_index").get<Index>();
    joint.density = mixture_from_json(j.at("joint_model"));
    if (joint.target_slot >= joint.density.dim()) throw Error(ErrorCode::IndexOutOfRange, "regression target slot");
    doc.engine = Engine(std::move(joint), spec);
  } else {
    throw Error(ErrorCode::ParseError, "unknown task kind");
  }
  if (j.contains("normalization") && !j.at("normalization").is_null()) {
    const auto lo = j.at("normalization").at("min").get<std::vector<double>>();
    const auto hi = j.at("normalization").at("max").get<std::vector<double>>();
    if (lo.size() != hi.size()) throw Error(ErrorCode::DimensionMismatch, "normalization min/max lengths differ");
    MinMaxStats s;
    s.min = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    s.max = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    doc.normalization = s;
  }
  doc.feature_names = j.value("feature_names", std::vector<std::string>{});
  doc.metadata = j.value("metadata", json::object());
  return doc;
}

void save_model(const ModelDocument& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << to_json(doc).dump(1) << '\n';
}

ModelDocument load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open model file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace dfa
