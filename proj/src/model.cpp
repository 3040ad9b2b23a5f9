#include "fairasr/model.h"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fairasr/diffcore.h"
#include "fairasr/errors.h"
#include "fairasr/rng.h"

namespace fairasr::toymodel {

using nlohmann::json;

std::vector<std::string> base_param_names() {
  return {kEncWeight, kEncBias, kHeadWeight, kHeadBias};
}

std::vector<std::string> adapter_param_names() {
  return {kAdapterDownWeight, kAdapterDownBias, kAdapterUpWeight,
          kAdapterUpBias};
}

void validate_config(const ModelConfig& config) {
  if (config.feature_dim < 1 || config.hidden_dim < 1 ||
      config.adapter_dim < 1 || config.vocab_size < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (config.adapter_dim >= config.hidden_dim) {
    throw ConfigError("adapter_dim " + std::to_string(config.adapter_dim) +
                      " must be smaller than hidden_dim " +
                      std::to_string(config.hidden_dim));
  }
}

namespace {

Tensor uniform_fan_in(std::size_t fan_in, std::size_t fan_out,
                      std::uint64_t seed, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor weight({fan_in, fan_out});
  SplitMix64 rng(stream_seed(seed, name));
  for (double& v : weight.data()) v = rng.uniform(-bound, bound);
  return weight;
}

void add_adapter_tensors(ParamSet& params, const ModelConfig& config,
                         std::uint64_t seed) {
  const auto h = static_cast<std::size_t>(config.hidden_dim);
  const auto r = static_cast<std::size_t>(config.adapter_dim);
  params.tensors[kAdapterDownWeight] =
      uniform_fan_in(h, r, seed, kAdapterDownWeight);
  params.tensors[kAdapterDownBias] = Tensor({r});
  // Zero-initialized up-projection: the adapter starts as an exact identity.
  params.tensors[kAdapterUpWeight] = Tensor({r, h});
  params.tensors[kAdapterUpBias] = Tensor({h});
}

}  // namespace

ParamSet init(const ModelConfig& config, std::uint64_t seed) {
  validate_config(config);
  const auto d = static_cast<std::size_t>(config.feature_dim);
  const auto h = static_cast<std::size_t>(config.hidden_dim);
  const auto v = static_cast<std::size_t>(config.vocab_size);
  ParamSet params;
  params.tensors[kEncWeight] = uniform_fan_in(d, h, seed, kEncWeight);
  params.tensors[kEncBias] = Tensor({h});
  params.tensors[kHeadWeight] = uniform_fan_in(h, v, seed, kHeadWeight);
  params.tensors[kHeadBias] = Tensor({v});
  if (config.adapter_enabled) {
    add_adapter_tensors(params, config, seed);
  }
  return params;
}

Model attach_adapter(const Model& base, std::uint64_t seed) {
  if (base.config.adapter_enabled) {
    throw ConfigError("base model already has adapters attached");
  }
  Model tuned = base;
  tuned.config.adapter_enabled = true;
  add_adapter_tensors(tuned.params, tuned.config, seed);
  for (const std::string& name : base_param_names()) {
    tuned.params.freeze.insert(name);
  }
  return tuned;
}

Forward forward(const ModelConfig& config, const ParamSet& params,
                const Tensor& features) {
  if (features.rank() != 2 ||
      features.cols() != static_cast<std::size_t>(config.feature_dim)) {
    throw std::invalid_argument(
        "features shape " + shape_to_string(features.shape()) +
        " does not match feature_dim " + std::to_string(config.feature_dim));
  }
  ForwardContext ctx;
  ctx.input = features;
  ctx.enc_act = diffcore::tanh_forward(diffcore::affine_forward(
      features, params.tensors.at(kEncWeight), params.tensors.at(kEncBias)));
  if (config.adapter_enabled) {
    ctx.down_act = diffcore::tanh_forward(diffcore::affine_forward(
        ctx.enc_act, params.tensors.at(kAdapterDownWeight),
        params.tensors.at(kAdapterDownBias)));
    ctx.phi = diffcore::affine_forward(ctx.down_act,
                                       params.tensors.at(kAdapterUpWeight),
                                       params.tensors.at(kAdapterUpBias));
    double* phi = ctx.phi.data().data();
    const double* residual = ctx.enc_act.data().data();
    for (std::size_t i = 0; i < ctx.phi.size(); ++i) phi[i] += residual[i];
  } else {
    ctx.phi = ctx.enc_act;
  }
  ctx.head_out = diffcore::affine_forward(
      ctx.phi, params.tensors.at(kHeadWeight), params.tensors.at(kHeadBias));
  Tensor logits = ctx.head_out;
  for (double& v : logits.data()) v *= params.irm_w;
  return Forward{ctx.phi, std::move(logits), std::move(ctx)};
}

void backward(const ModelConfig& config, const ParamSet& params,
              const ForwardContext& ctx, const Tensor& d_logits,
              const Tensor* d_head_direct, GradMap& grads) {
  if (ctx.input.size() == 0) {
    throw std::logic_error("backward called without a saved forward context");
  }
  if (!d_logits.same_shape(ctx.head_out)) {
    throw std::invalid_argument("upstream gradient shape " +
                                shape_to_string(d_logits.shape()) +
                                " does not match logits shape " +
                                shape_to_string(ctx.head_out.shape()));
  }
  // logits = irm_w * head_out, so d(head_out) picks up irm_w and the scalar
  // collects <d_logits, head_out>.
  double d_irm = 0.0;
  Tensor d_head = d_logits;
  {
    double* dh = d_head.data().data();
    const double* z = ctx.head_out.data().data();
    for (std::size_t i = 0; i < d_head.size(); ++i) {
      d_irm += dh[i] * z[i];
      dh[i] *= params.irm_w;
    }
  }
  if (d_head_direct != nullptr) {
    if (!d_head_direct->same_shape(d_head)) {
      throw std::invalid_argument("direct head gradient shape " +
                                  shape_to_string(d_head_direct->shape()) +
                                  " does not match " +
                                  shape_to_string(d_head.shape()));
    }
    double* dh = d_head.data().data();
    const double* extra = d_head_direct->data().data();
    for (std::size_t i = 0; i < d_head.size(); ++i) dh[i] += extra[i];
  }
  grads.accumulate(kIrmScalarName, Tensor::scalar(d_irm));

  diffcore::AffineGrads head = diffcore::affine_backward(
      ctx.phi, params.tensors.at(kHeadWeight), d_head);
  if (!params.is_frozen(kHeadWeight)) {
    grads.accumulate(kHeadWeight, head.d_weight);
  }
  if (!params.is_frozen(kHeadBias)) {
    grads.accumulate(kHeadBias, head.d_bias);
  }

  Tensor d_enc_act;
  if (config.adapter_enabled) {
    // phi = enc_act + up(tanh(down(enc_act)))
    diffcore::AffineGrads up = diffcore::affine_backward(
        ctx.down_act, params.tensors.at(kAdapterUpWeight), head.d_input);
    if (!params.is_frozen(kAdapterUpWeight)) {
      grads.accumulate(kAdapterUpWeight, up.d_weight);
    }
    if (!params.is_frozen(kAdapterUpBias)) {
      grads.accumulate(kAdapterUpBias, up.d_bias);
    }
    Tensor d_down_lin = diffcore::tanh_backward(ctx.down_act, up.d_input);
    diffcore::AffineGrads down = diffcore::affine_backward(
        ctx.enc_act, params.tensors.at(kAdapterDownWeight), d_down_lin);
    if (!params.is_frozen(kAdapterDownWeight)) {
      grads.accumulate(kAdapterDownWeight, down.d_weight);
    }
    if (!params.is_frozen(kAdapterDownBias)) {
      grads.accumulate(kAdapterDownBias, down.d_bias);
    }
    d_enc_act = head.d_input;  // residual path
    double* acc = d_enc_act.data().data();
    const double* through = down.d_input.data().data();
    for (std::size_t i = 0; i < d_enc_act.size(); ++i) acc[i] += through[i];
  } else {
    d_enc_act = head.d_input;
  }

  Tensor d_enc_lin = diffcore::tanh_backward(ctx.enc_act, d_enc_act);
  diffcore::AffineGrads enc = diffcore::affine_backward(
      ctx.input, params.tensors.at(kEncWeight), d_enc_lin);
  if (!params.is_frozen(kEncWeight)) {
    grads.accumulate(kEncWeight, enc.d_weight);
  }
  if (!params.is_frozen(kEncBias)) {
    grads.accumulate(kEncBias, enc.d_bias);
  }
}

std::vector<int> decode(const Tensor& logits) {
  const std::size_t frames = logits.rows();
  const std::size_t vocab = logits.cols();
  std::vector<int> tokens(frames, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < vocab; ++v) {
      if (logits.at(t, v) > logits.at(t, best)) best = v;
    }
    tokens[t] = static_cast<int>(best);
  }
  return tokens;
}

namespace {

json config_to_json(const ModelConfig& config) {
  return json{{"feature_dim", config.feature_dim},
              {"hidden_dim", config.hidden_dim},
              {"adapter_dim", config.adapter_dim},
              {"vocab_size", config.vocab_size},
              {"adapter_enabled", config.adapter_enabled}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig config;
  config.feature_dim = j.at("feature_dim").get<int>();
  config.hidden_dim = j.at("hidden_dim").get<int>();
  config.adapter_dim = j.at("adapter_dim").get<int>();
  config.vocab_size = j.at("vocab_size").get<int>();
  config.adapter_enabled = j.at("adapter_enabled").get<bool>();
  return config;
}

}  // namespace

std::string checkpoint_to_string(const Model& model) {
  json params = json::object();
  for (const auto& [name, tensor] : model.params.tensors) {
    params[name] = json{{"shape", tensor.shape()}, {"data", tensor.data()}};
  }
  const json doc{{"config", config_to_json(model.config)},
                 {"freeze", std::vector<std::string>(
                                model.params.freeze.begin(),
                                model.params.freeze.end())},
                 {"irm_w", model.params.irm_w},
                 {"params", params}};
  return doc.dump(2);
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << checkpoint_to_string(model) << "\n";
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": malformed checkpoint: " + e.what());
  }
  Model model;
  try {
    model.config = config_from_json(doc.at("config"));
    for (const std::string& name :
         doc.at("freeze").get<std::vector<std::string>>()) {
      model.params.freeze.insert(name);
    }
    model.params.irm_w = doc.at("irm_w").get<double>();
    for (const auto& [name, entry] : doc.at("params").items()) {
      model.params.tensors[name] =
          Tensor(entry.at("shape").get<std::vector<std::size_t>>(),
                 entry.at("data").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": invalid checkpoint: " + e.what());
  }
  return model;
}

}  // namespace fairasr::toymodel
