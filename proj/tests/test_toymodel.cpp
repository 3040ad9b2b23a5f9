#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fairasr/dataset.h"
#include "fairasr/diffcore.h"
#include "fairasr/model.h"
#include "fairasr/rng.h"

using fairasr::GradMap;
using fairasr::SplitMix64;
using fairasr::Tensor;
namespace diffcore = fairasr::diffcore;
namespace toymodel = fairasr::toymodel;
namespace accentsynth = fairasr::accentsynth;
using toymodel::Model;
using toymodel::ModelConfig;
using toymodel::ParamSet;

namespace {

ModelConfig small_config(bool adapter) {
  ModelConfig config;
  config.feature_dim = 3;
  config.hidden_dim = 5;
  config.adapter_dim = 2;
  config.vocab_size = 4;
  config.adapter_enabled = adapter;
  return config;
}

Tensor random_features(std::size_t frames, std::size_t dim,
                       std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor features({frames, dim});
  for (double& v : features.data()) v = rng.gaussian();
  return features;
}

// ParamSet <-> flat map with the irm_w scalar injected as a 1-element
// tensor, for finite-difference checks over every differentiation point.
std::map<std::string, Tensor> params_to_map(const ParamSet& params) {
  std::map<std::string, Tensor> flat = params.tensors;
  flat[toymodel::kIrmScalarName] = Tensor::scalar(params.irm_w);
  return flat;
}

ParamSet params_from_map(const std::map<std::string, Tensor>& flat,
                         const ParamSet& reference) {
  ParamSet params = reference;
  for (const auto& [name, tensor] : flat) {
    if (name == toymodel::kIrmScalarName) {
      params.irm_w = tensor[0];
    } else {
      params.tensors[name] = tensor;
    }
  }
  return params;
}

}  // namespace

TEST_CASE("fresh adapter init forwards identically to the base model") {
  const ModelConfig with_adapter = small_config(true);
  const ModelConfig without = small_config(false);
  const ParamSet params_adapter = toymodel::init(with_adapter, 12);
  const ParamSet params_base = toymodel::init(without, 12);
  const Tensor features = random_features(4, 3, 99);
  const Tensor a =
      toymodel::forward(with_adapter, params_adapter, features).logits;
  const Tensor b = toymodel::forward(without, params_base, features).logits;
  CHECK(a == b);  // bit-identical: zero up-projection is an exact identity
}

TEST_CASE("init is deterministic per seed") {
  const ModelConfig config = small_config(true);
  CHECK(toymodel::init(config, 7) == toymodel::init(config, 7));
  CHECK_FALSE(toymodel::init(config, 7) == toymodel::init(config, 8));
}

TEST_CASE("init weights stay within the fan-in bound") {
  ModelConfig config = small_config(false);
  config.feature_dim = 16;
  config.hidden_dim = 64;  // 1024 samples in enc_w
  const ParamSet params = toymodel::init(config, 5);
  const Tensor& enc_w = params.tensors.at(toymodel::kEncWeight);
  REQUIRE(enc_w.size() == 1024);
  const double bound = 1.0 / std::sqrt(16.0);
  for (double v : enc_w.data()) {
    CHECK(v >= -bound);
    CHECK(v < bound);
  }
  for (double v : params.tensors.at(toymodel::kEncBias).data()) {
    CHECK(v == 0.0);
  }
  CHECK(params.irm_w == 1.0);
}

TEST_CASE("zero weights give zero logits") {
  const ModelConfig config = small_config(false);
  ParamSet params = toymodel::init(config, 1);
  for (auto& [name, tensor] : params.tensors) {
    for (double& v : tensor.data()) v = 0.0;
  }
  const Tensor logits =
      toymodel::forward(config, params, random_features(3, 3, 2)).logits;
  for (double v : logits.data()) CHECK(v == 0.0);
}

TEST_CASE("adapter with zero up-projection matches the base for any down") {
  const ModelConfig config = small_config(true);
  ParamSet params = toymodel::init(config, 3);
  // Randomize the down projection; identity must still hold.
  SplitMix64 rng(17);
  for (double& v : params.tensors.at(toymodel::kAdapterDownWeight).data()) {
    v = rng.gaussian();
  }
  for (double& v : params.tensors.at(toymodel::kAdapterDownBias).data()) {
    v = rng.gaussian();
  }
  ModelConfig base_config = config;
  base_config.adapter_enabled = false;
  ParamSet base_params;
  for (const std::string& name : toymodel::base_param_names()) {
    base_params.tensors[name] = params.tensors.at(name);
  }
  const Tensor features = random_features(5, 3, 21);
  CHECK(toymodel::forward(config, params, features).logits ==
        toymodel::forward(base_config, base_params, features).logits);
}

TEST_CASE("forward matches a straight-line recomputation") {
  const ModelConfig config = small_config(true);
  ParamSet params = toymodel::init(config, 19);
  SplitMix64 rng(23);
  for (double& v : params.tensors.at(toymodel::kAdapterUpWeight).data()) {
    v = 0.1 * rng.gaussian();
  }
  const Tensor features = random_features(2, 3, 31);
  const toymodel::Forward fwd = toymodel::forward(config, params, features);

  const Tensor& enc_w = params.tensors.at(toymodel::kEncWeight);
  const Tensor& enc_b = params.tensors.at(toymodel::kEncBias);
  const Tensor& down_w = params.tensors.at(toymodel::kAdapterDownWeight);
  const Tensor& down_b = params.tensors.at(toymodel::kAdapterDownBias);
  const Tensor& up_w = params.tensors.at(toymodel::kAdapterUpWeight);
  const Tensor& up_b = params.tensors.at(toymodel::kAdapterUpBias);
  const Tensor& head_w = params.tensors.at(toymodel::kHeadWeight);
  const Tensor& head_b = params.tensors.at(toymodel::kHeadBias);

  for (std::size_t t = 0; t < 2; ++t) {
    std::vector<double> act(5, 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = enc_b[j];
      for (std::size_t k = 0; k < 3; ++k) {
        acc += features.at(t, k) * enc_w.at(k, j);
      }
      act[j] = std::tanh(acc);
    }
    std::vector<double> down(2, 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = down_b[j];
      for (std::size_t k = 0; k < 5; ++k) acc += act[k] * down_w.at(k, j);
      down[j] = std::tanh(acc);
    }
    std::vector<double> phi(5, 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = up_b[j];
      for (std::size_t k = 0; k < 2; ++k) acc += down[k] * up_w.at(k, j);
      phi[j] = act[j] + acc;
    }
    for (std::size_t v = 0; v < 4; ++v) {
      double acc = head_b[v];
      for (std::size_t k = 0; k < 5; ++k) acc += phi[k] * head_w.at(k, v);
      CHECK(fwd.logits.at(t, v) ==
            doctest::Approx(params.irm_w * acc).epsilon(1e-12));
      CHECK(fwd.phi.at(t, static_cast<std::size_t>(v) % 5) ==
            doctest::Approx(phi[static_cast<std::size_t>(v) % 5])
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("decode takes the per-frame argmax with low-index ties") {
  const Tensor logits({2, 2}, {0.1, 0.9, 0.5, 0.5});
  const std::vector<int> tokens = toymodel::decode(logits);
  CHECK(tokens == std::vector<int>{1, 0});
}

TEST_CASE("nearest-prototype parameters decode a noiseless dataset exactly") {
  accentsynth::GenerateConfig data_config;
  data_config.vocab_size = 6;
  data_config.feature_dim = 4;
  data_config.train_size = 40;
  data_config.val_size = 8;
  data_config.test_size = 8;
  data_config.noise_level = 0.0;
  data_config.prototype_seed = 3;
  for (int g = 0; g < 2; ++g) {
    accentsynth::GroupSpec spec;
    spec.mixing_weight = 0.5;
    spec.shift.assign(4, 0.0);
    data_config.groups.push_back(spec);
  }
  const accentsynth::DatasetSplit split =
      accentsynth::generate(data_config, 77);

  // Same prototype stream the generator uses.
  Tensor prototypes({6, 4});
  SplitMix64 rng(fairasr::stream_seed(data_config.prototype_seed,
                                      "token-prototypes"));
  for (std::size_t v = 0; v < 6; ++v) {
    for (std::size_t k = 0; k + 1 < 4; ++k) {
      prototypes.at(v, k) = rng.gaussian();
    }
  }

  // Oracle parameters: with a near-linear encoder (epsilon-scaled identity),
  // head weights p_v / epsilon and bias -|p_v|^2 / 2 make the logits the
  // nearest-prototype score x . p_v - |p_v|^2 / 2.
  ModelConfig config;
  config.feature_dim = 4;
  config.hidden_dim = 4;
  config.adapter_dim = 1;
  config.vocab_size = 6;
  config.adapter_enabled = false;
  const double epsilon = 1e-4;
  ParamSet params;
  params.tensors[toymodel::kEncWeight] = Tensor({4, 4});
  for (std::size_t k = 0; k < 4; ++k) {
    params.tensors[toymodel::kEncWeight].at(k, k) = epsilon;
  }
  params.tensors[toymodel::kEncBias] = Tensor({4});
  params.tensors[toymodel::kHeadWeight] = Tensor({4, 6});
  params.tensors[toymodel::kHeadBias] = Tensor({6});
  for (std::size_t v = 0; v < 6; ++v) {
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      params.tensors[toymodel::kHeadWeight].at(k, v) =
          prototypes.at(v, k) / epsilon;
      norm_sq += prototypes.at(v, k) * prototypes.at(v, k);
    }
    params.tensors[toymodel::kHeadBias][v] = -norm_sq / 2.0;
  }

  for (const accentsynth::Utterance& utt : split.test) {
    const toymodel::Forward fwd = toymodel::forward(config, params,
                                                    utt.features);
    CHECK(toymodel::decode(fwd.logits) == utt.transcript);
  }
}

TEST_CASE("analytic irm_w gradient matches finite differences") {
  const ModelConfig config = small_config(true);
  ParamSet params = toymodel::init(config, 41);
  SplitMix64 rng(43);
  for (double& v : params.tensors.at(toymodel::kAdapterUpWeight).data()) {
    v = 0.2 * rng.gaussian();
  }
  const Tensor features = random_features(3, 3, 47);
  const std::vector<int> targets{1, 0, 3};

  const toymodel::Forward fwd = toymodel::forward(config, params, features);
  const Tensor d_logits = diffcore::ce_logits_backward(fwd.logits, targets);
  GradMap grads;
  toymodel::backward(config, params, fwd.ctx, d_logits, nullptr, grads);

  auto eval = [&](const std::map<std::string, Tensor>& flat) {
    const ParamSet p = params_from_map(flat, params);
    return diffcore::ce_logits_forward(
        toymodel::forward(config, p, features).logits, targets);
  };
  GradMap only_irm;
  only_irm.accumulate(toymodel::kIrmScalarName,
                      *grads.find(toymodel::kIrmScalarName));
  const auto errors =
      diffcore::grad_check(eval, params_to_map(params), only_irm, 1e-4);
  CHECK(errors.at(toymodel::kIrmScalarName) < 1e-4);
}

TEST_CASE("backward skips frozen parameters") {
  const ModelConfig config = small_config(true);
  ParamSet params = toymodel::init(config, 53);
  for (const std::string& name : toymodel::base_param_names()) {
    params.freeze.insert(name);
  }
  const Tensor features = random_features(2, 3, 59);
  const toymodel::Forward fwd = toymodel::forward(config, params, features);
  const Tensor d_logits = diffcore::ce_logits_backward(fwd.logits, {0, 1});
  GradMap grads;
  toymodel::backward(config, params, fwd.ctx, d_logits, nullptr, grads);
  for (const std::string& name : toymodel::base_param_names()) {
    CHECK(grads.find(name) == nullptr);
  }
  for (const std::string& name : toymodel::adapter_param_names()) {
    CHECK(grads.find(name) != nullptr);
  }
  CHECK(grads.find(toymodel::kIrmScalarName) != nullptr);
}

TEST_CASE("checkpoints round-trip exactly with lexicographic keys") {
  const ModelConfig config = small_config(true);
  Model model{config, toymodel::init(config, 61)};
  model.params.freeze = {toymodel::kEncWeight, toymodel::kEncBias};
  const auto dir = std::filesystem::temp_directory_path() / "fairasr_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ckpt.json";
  toymodel::save_checkpoint(model, path);
  const Model loaded = toymodel::load_checkpoint(path);
  CHECK(loaded == model);

  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  // Parameter keys appear in lexicographic order in the serialized form.
  std::vector<std::string> names;
  for (const auto& [name, tensor] : model.params.tensors) names.push_back(name);
  std::size_t previous = text.find("\"params\"");
  REQUIRE(previous != std::string::npos);
  for (const std::string& name : names) {
    const std::size_t pos = text.find("\"" + name + "\"", previous);
    REQUIRE(pos != std::string::npos);
    CHECK(pos > previous);
    previous = pos;
  }
}

TEST_CASE("attach_adapter freezes the base and keeps it bit-identical") {
  const ModelConfig config = small_config(false);
  const Model base{config, toymodel::init(config, 67)};
  const Model tuned = toymodel::attach_adapter(base, 71);
  CHECK(tuned.config.adapter_enabled);
  for (const std::string& name : toymodel::base_param_names()) {
    CHECK(tuned.params.is_frozen(name));
    CHECK(tuned.params.tensors.at(name) == base.params.tensors.at(name));
  }
  for (double v :
       tuned.params.tensors.at(toymodel::kAdapterUpWeight).data()) {
    CHECK(v == 0.0);
  }
}
