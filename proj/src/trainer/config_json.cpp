#include "spd/trainer/config_json.hpp"

#include <stdexcept>

namespace spd::trainer {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

namespace {

std::string_view form_name(DenseLossForm f) { return f == DenseLossForm::kProduct ? "product" : "sum"; }

DenseLossForm parse_form(const std::string& s) {
  if (s == "product") return DenseLossForm::kProduct;
  if (s == "sum") return DenseLossForm::kSum;
  throw std::invalid_argument("dense_loss_form must be 'product' or 'sum', got '" + s + "'");
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  json stages = json::array();
  for (const StageSpec& s : c.backbone_blocks) stages.push_back({{"blocks", s.blocks}, {"width", s.width}});
  return {{"num_classes", c.num_classes},
          {"num_joints", c.num_joints},
          {"num_parts", c.num_parts},
          {"backbone_blocks", stages},
          {"context_channels", c.context_channels},
          {"lambda_s", c.lambda_s},
          {"lambda_p", c.lambda_p},
          {"lambda_d", c.lambda_d},
          {"variant", std::string(variant_name(c.variant))},
          {"seed", c.seed},
          {"aspp_rates", c.aspp_rates},
          {"aspp_width", c.aspp_width},
          {"detail_channels", c.detail_channels},
          {"dense_loss_form", std::string(form_name(c.dense_loss_form))},
          {"huber_delta", c.huber_delta}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"num_classes", "num_joints", "num_parts", "backbone_blocks", "context_channels", "lambda_s",
                       "lambda_p", "lambda_d", "variant", "seed", "aspp_rates", "aspp_width", "detail_channels",
                       "dense_loss_form", "huber_delta"},
                      "model config");
  ModelConfig c = default_config();
  read(j, "num_classes", c.num_classes);
  read(j, "num_joints", c.num_joints);
  read(j, "num_parts", c.num_parts);
  if (j.contains("backbone_blocks")) {
    const json& stages = j.at("backbone_blocks");
    if (!stages.is_array()) throw std::invalid_argument("backbone_blocks must be an array");
    c.backbone_blocks.clear();
    for (const json& s : stages) {
      reject_unknown_keys(s, {"blocks", "width"}, "backbone_blocks entry");
      StageSpec spec;
      read(s, "blocks", spec.blocks);
      read(s, "width", spec.width);
      c.backbone_blocks.push_back(spec);
    }
  }
  read(j, "context_channels", c.context_channels);
  read(j, "lambda_s", c.lambda_s);
  read(j, "lambda_p", c.lambda_p);
  read(j, "lambda_d", c.lambda_d);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  read(j, "seed", c.seed);
  read(j, "aspp_rates", c.aspp_rates);
  read(j, "aspp_width", c.aspp_width);
  read(j, "detail_channels", c.detail_channels);
  if (j.contains("dense_loss_form")) c.dense_loss_form = parse_form(j.at("dense_loss_form").get<std::string>());
  read(j, "huber_delta", c.huber_delta);
  check_config(c);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"model", model_config_to_json(c.model)}, {"iterations", c.iterations},
          {"batch_size", c.batch_size},             {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},                       {"beta2", c.beta2},
          {"adam_eps", c.adam_eps}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown_keys(j, {"model", "iterations", "batch_size", "learning_rate", "beta1", "beta2", "adam_eps"},
                      "trainer config");
  TrainConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  read(j, "iterations", c.iterations);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "adam_eps", c.adam_eps);
  if (c.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(c.learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  return c;
}

}  // namespace spd::trainer
