#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fairasr/tensor.h"

namespace fairasr::toymodel {

// Frame-synchronous toy ASR model: per-frame MLP encoder, optional residual
// bottleneck adapter, linear output head. The scalar irm_w multiplies the
// head output so the invariance penalty has a well-defined differentiation
// point; it stays fixed at 1.0 and is never updated.
struct ModelConfig {
  int feature_dim = 0;   // d
  int hidden_dim = 0;    // h
  int adapter_dim = 0;   // r, must be < h
  int vocab_size = 0;    // V
  bool adapter_enabled = false;

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr const char* kEncWeight = "enc_w";
inline constexpr const char* kEncBias = "enc_b";
inline constexpr const char* kHeadWeight = "head_w";
inline constexpr const char* kHeadBias = "head_b";
inline constexpr const char* kAdapterDownWeight = "adapter_down_w";
inline constexpr const char* kAdapterDownBias = "adapter_down_b";
inline constexpr const char* kAdapterUpWeight = "adapter_up_w";
inline constexpr const char* kAdapterUpBias = "adapter_up_b";
inline constexpr const char* kIrmScalarName = "irm_w";

std::vector<std::string> base_param_names();
std::vector<std::string> adapter_param_names();

struct ParamSet {
  std::map<std::string, Tensor> tensors;
  double irm_w = 1.0;
  std::set<std::string> freeze;

  bool is_frozen(const std::string& name) const {
    return freeze.count(name) > 0;
  }
  bool operator==(const ParamSet&) const = default;
};

struct Model {
  ModelConfig config;
  ParamSet params;

  bool operator==(const Model&) const = default;
};

void validate_config(const ModelConfig& config);

// Weights ~ Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) on a per-tensor-name
// stream, biases zero. The adapter up-projection starts at zero so a fresh
// adapter is an exact identity.
ParamSet init(const ModelConfig& config, std::uint64_t seed);

// Adds freshly initialized adapter tensors to a copy of `base` and freezes
// every base parameter. The returned model has adapter_enabled set.
Model attach_adapter(const Model& base, std::uint64_t seed);

// Saved intermediates for the analytic backward pass.
struct ForwardContext {
  Tensor input;     // T x d
  Tensor enc_act;   // T x h, tanh(enc(x))
  Tensor down_act;  // T x r, tanh(down(enc_act)); empty when no adapter
  Tensor phi;       // T x h, adapter output (== enc_act when no adapter)
  Tensor head_out;  // T x V, head(phi) before the irm_w scaling
};

struct Forward {
  Tensor phi;     // T x h
  Tensor logits;  // T x V, irm_w * head_out
  ForwardContext ctx;
};

Forward forward(const ModelConfig& config, const ParamSet& params,
                const Tensor& features);

// Accumulates parameter gradients into `grads`. `d_logits` is dL/d(logits);
// `d_head_direct` optionally adds a gradient that reaches the head output
// without passing through the irm_w scaling (the invariance penalty needs
// this split so the irm_w entry stays exact). Frozen parameters are skipped;
// an "irm_w" entry is always accumulated.
void backward(const ModelConfig& config, const ParamSet& params,
              const ForwardContext& ctx, const Tensor& d_logits,
              const Tensor* d_head_direct, GradMap& grads);

// Per-frame argmax; ties break toward the lowest token index.
std::vector<int> decode(const Tensor& logits);

// Checkpoint JSON: config, freeze set, parameter name -> shape + row-major
// values (full precision). Keys are written in lexicographic order.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const Model& model);

}  // namespace fairasr::toymodel
