#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "anchorface/aggregate.hpp"
#include "anchorface/anchors.hpp"
#include "anchorface/image.hpp"
#include "anchorface/net.hpp"
#include "anchorface/train.hpp"

namespace anchorface {

inline nlohmann::ordered_json to_json(const AnchorGridConfig& g) {
  nlohmann::ordered_json j;
  j["image_side"] = g.image_side;
  j["anchor_area_side"] = g.anchor_area_side;
  j["grid_rows"] = g.grid_rows;
  j["grid_cols"] = g.grid_cols;
  return j;
}

inline AnchorGridConfig anchor_grid_config_from_json(const nlohmann::json& j) {
  AnchorGridConfig g;
  g.image_side = j.at("image_side").get<double>();
  g.anchor_area_side = j.at("anchor_area_side").get<double>();
  g.grid_rows = j.at("grid_rows").get<int>();
  g.grid_cols = j.at("grid_cols").get<int>();
  return g;
}

inline nlohmann::ordered_json to_json(const AggregateConfig& a) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(a.strategy);
  j["c_th"] = a.c_th;
  j["fallback"] = a.fallback == AggregateFallback::Error ? "error" : "argmax";
  return j;
}

inline AggregateConfig aggregate_config_from_json(const nlohmann::json& j) {
  AggregateConfig a;
  a.strategy = parse_strategy(j.value("strategy", std::string("weighted")));
  a.c_th = j.value("c_th", a.c_th);
  a.fallback = j.value("fallback", std::string("argmax")) == "error" ? AggregateFallback::Error : AggregateFallback::ArgmaxFallback;
  return a;
}

/// A trained model: weights plus everything needed to decode them.
struct ModelBundle {
  ModelConfig config;
  std::optional<AnchorGridConfig> grid;       // anchor head only
  std::optional<AnchorTemplateSet> templates;  // anchor head only
  LossConfig loss{};
  TrainSchedule schedule{};
  AggregateConfig aggregate{};
  ParameterSet<float> params;

  AnchorSetup setup() const {
    if (!grid || !templates) detail::fail(ErrorKind::State, "bundle has no anchor geometry");
    return AnchorSetup(build_anchor_grid(*grid), *templates);
  }
};

inline nlohmann::ordered_json sidecar_json(const ModelBundle& b) {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash(b.config);
  j["model"] = to_json(b.config);
  if (b.grid) j["grid"] = to_json(*b.grid);
  if (b.templates) j["templates"] = to_json(*b.templates);
  j["loss"] = to_json(b.loss);
  j["schedule"] = to_json(b.schedule);
  j["aggregate"] = to_json(b.aggregate);
  return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& weights) {
  auto p = weights;
  p += ".json";
  return p;
}

/// Writes `<path>` (binary weights) and `<path>.json` (configuration).
inline void save_bundle(const std::filesystem::path& path, const ModelBundle& b) {
  check_layout(b.params, b.config);
  detail::write_file(path.string(), encode_params(b.params, config_hash(b.config)));
  detail::write_file(sidecar_path(path).string(), sidecar_json(b).dump(2) + "\n");
}

inline ModelBundle load_bundle(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(detail::read_file(sidecar_path(path).string()), nullptr, false);
  if (j.is_discarded()) detail::fail(ErrorKind::Parse, "malformed model sidecar " + sidecar_path(path).string());
  ModelBundle b;
  b.config = model_config_from_json(j.at("model"));
  if (j.contains("grid")) b.grid = anchor_grid_config_from_json(j["grid"]);
  if (j.contains("templates")) b.templates = template_set_from_json(j["templates"]);
  b.loss = loss_config_from_json(j.at("loss"));
  b.schedule = train_schedule_from_json(j.at("schedule"));
  b.aggregate = aggregate_config_from_json(j.at("aggregate"));
  auto decoded = decode_params(detail::read_file(path.string()));
  if (decoded.hash != config_hash(b.config)) detail::fail(ErrorKind::Config, "weights were trained for a different configuration");
  check_layout(decoded.params, b.config);
  b.params = std::move(decoded.params);
  if (b.config.head == HeadKind::Anchor) check_compatible(b.config, b.setup());
  return b;
}

/// Landmarks for one image in pixels of the model input.
inline LandmarkShape predict_shape(const ModelBundle& b, const Image& img) {
  if (img.width != b.config.input_side || img.height != b.config.input_side || img.channels != b.config.channels) {
    detail::fail(ErrorKind::ShapeMismatch, "image must be " + std::to_string(b.config.input_side) + "x" +
                                               std::to_string(b.config.input_side) + " with " +
                                               std::to_string(b.config.channels) + " channel(s)");
  }
  Sample s;
  s.image = img;
  const std::span<const Sample> one(&s, 1);
  if (b.config.head == HeadKind::Direct) return predict_direct(b.config, b.params, one).front();
  const auto setup = b.setup();
  const auto fields = predict_fields(b.config, b.params, one);
  return aggregate(fields.front(), setup.grid, setup.templates, b.aggregate, setup.table).landmarks;
}

}  // namespace anchorface
