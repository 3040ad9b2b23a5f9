#include "fairasr/objectives.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fairasr/diffcore.h"
#include "fairasr/errors.h"

namespace fairasr::objectives {

using accentsynth::Utterance;

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::erm: return "erm";
    case Kind::sd: return "sd";
    case Kind::dro: return "dro";
    case Kind::irm: return "irm";
    case Kind::fusion: return "fusion";
  }
  return "unknown";
}

Kind kind_from_name(const std::string& name) {
  if (name == "erm") return Kind::erm;
  if (name == "sd") return Kind::sd;
  if (name == "dro") return Kind::dro;
  if (name == "irm") return Kind::irm;
  if (name == "fusion") return Kind::fusion;
  throw ConfigError("unknown objective '" + name +
                    "' (expected erm|sd|dro|irm|fusion)");
}

double reconstruct_total(const LossReport& report,
                         const FusionWeights& weights) {
  switch (report.kind) {
    case Kind::erm: return report.erm;
    case Kind::sd: return report.erm + weights.sd_lambda * report.sd_penalty;
    case Kind::dro: return report.dro;
    case Kind::irm: return report.irm_penalty;
    case Kind::fusion: {
      const double sd_term =
          (weights.sd_inner_erm ? report.erm : 0.0) +
          weights.sd_lambda * report.sd_penalty;
      return weights.lambda_e * report.erm + weights.lambda_s * sd_term +
             weights.lambda_d * report.dro +
             weights.lambda_i * report.irm_penalty;
    }
  }
  return report.total;
}

namespace {

struct UttForward {
  const Utterance* utt = nullptr;
  toymodel::Forward fwd;
  double ce = 0.0;  // mean-per-frame cross-entropy of this utterance
};

struct BatchForward {
  std::map<int, std::vector<UttForward>> groups;
  std::size_t total_utterances = 0;
  std::size_t total_frames = 0;
};

BatchForward run_forward(const toymodel::Model& model,
                         const GroupedBatch& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("objective requires a non-empty batch");
  }
  BatchForward out;
  for (const auto& [group, members] : batch.groups) {
    if (members.empty()) {
      throw std::invalid_argument("group " + std::to_string(group) +
                                  " listed in batch but empty");
    }
    std::vector<UttForward>& fwds = out.groups[group];
    fwds.reserve(members.size());
    for (const Utterance* utt : members) {
      UttForward uf;
      uf.utt = utt;
      uf.fwd = toymodel::forward(model.config, model.params, utt->features);
      uf.ce = diffcore::ce_logits_forward(uf.fwd.logits, utt->transcript);
      out.total_frames += utt->transcript.size();
      fwds.push_back(std::move(uf));
    }
    out.total_utterances += members.size();
  }
  return out;
}

// Within-group means of the per-utterance loss, plus the argmax group
// (ties toward the lowest index; std::map iterates ascending).
void fill_group_losses(const BatchForward& fwd, LossReport& report) {
  double worst = -1.0;
  for (const auto& [group, members] : fwd.groups) {
    double mean = 0.0;
    for (const UttForward& uf : members) mean += uf.ce;
    mean /= static_cast<double>(members.size());
    report.per_group_loss[group] = mean;
    if (report.worst_group < 0 || mean > worst) {
      worst = mean;
      report.worst_group = group;
    }
  }
}

double pooled_mean_ce(const BatchForward& fwd) {
  double total = 0.0;
  for (const auto& [group, members] : fwd.groups) {
    for (const UttForward& uf : members) total += uf.ce;
  }
  return total / static_cast<double>(fwd.total_utterances);
}

void accumulate_ce_gradients(const toymodel::Model& model,
                             const std::vector<UttForward>& members,
                             double utterance_weight, GradMap& grads) {
  for (const UttForward& uf : members) {
    Tensor d_logits =
        diffcore::ce_logits_backward(uf.fwd.logits, uf.utt->transcript);
    for (double& v : d_logits.data()) v *= utterance_weight;
    toymodel::backward(model.config, model.params, uf.fwd.ctx, d_logits,
                       nullptr, grads);
  }
}

}  // namespace

LossReport erm(const toymodel::Model& model, const GroupedBatch& batch) {
  const BatchForward fwd = run_forward(model, batch);
  LossReport report;
  report.kind = Kind::erm;
  report.erm = pooled_mean_ce(fwd);
  report.total = report.erm;
  fill_group_losses(fwd, report);
  const double weight = 1.0 / static_cast<double>(fwd.total_utterances);
  for (const auto& [group, members] : fwd.groups) {
    accumulate_ce_gradients(model, members, weight, report.grads);
  }
  return report;
}

LossReport sd(const toymodel::Model& model, const GroupedBatch& batch,
              double lambda) {
  if (lambda < 0.0) {
    throw ConfigError("sd lambda must be non-negative, got " +
                      std::to_string(lambda));
  }
  const BatchForward fwd = run_forward(model, batch);
  LossReport report;
  report.kind = Kind::sd;
  report.erm = pooled_mean_ce(fwd);
  fill_group_losses(fwd, report);

  // Penalty is the squared logit norm averaged over every frame in the
  // batch, so its scale does not depend on utterance length or batch size.
  double squared_norm = 0.0;
  for (const auto& [group, members] : fwd.groups) {
    for (const UttForward& uf : members) {
      for (double v : uf.fwd.logits.data()) squared_norm += v * v;
    }
  }
  report.sd_penalty = squared_norm / static_cast<double>(fwd.total_frames);
  report.total = report.erm + lambda * report.sd_penalty;

  const double ce_weight = 1.0 / static_cast<double>(fwd.total_utterances);
  const double penalty_scale =
      2.0 * lambda / static_cast<double>(fwd.total_frames);
  for (const auto& [group, members] : fwd.groups) {
    for (const UttForward& uf : members) {
      Tensor d_logits =
          diffcore::ce_logits_backward(uf.fwd.logits, uf.utt->transcript);
      const double* logits = uf.fwd.logits.data().data();
      double* d = d_logits.data().data();
      for (std::size_t i = 0; i < d_logits.size(); ++i) {
        d[i] = d[i] * ce_weight + penalty_scale * logits[i];
      }
      toymodel::backward(model.config, model.params, uf.fwd.ctx, d_logits,
                         nullptr, report.grads);
    }
  }
  return report;
}

LossReport group_dro(const toymodel::Model& model, const GroupedBatch& batch) {
  const BatchForward fwd = run_forward(model, batch);
  LossReport report;
  report.kind = Kind::dro;
  fill_group_losses(fwd, report);
  report.dro = report.per_group_loss.at(report.worst_group);
  report.total = report.dro;
  // Hard max: the subgradient is the worst group's gradient alone.
  const std::vector<UttForward>& worst = fwd.groups.at(report.worst_group);
  accumulate_ce_gradients(model, worst,
                          1.0 / static_cast<double>(worst.size()),
                          report.grads);
  return report;
}

LossReport irm(const toymodel::Model& model, const GroupedBatch& batch) {
  const BatchForward fwd = run_forward(model, batch);
  LossReport report;
  report.kind = Kind::irm;
  fill_group_losses(fwd, report);

  // Per environment e, g_e = d L^(e) / d irm_w evaluated analytically:
  // the per-frame derivative is sum_v softmax(o)_v z_v - z_target with
  // z the head output, averaged the same way L^(e) averages frames.
  std::map<int, double> env_grad;
  for (const auto& [group, members] : fwd.groups) {
    double g_env = 0.0;
    for (const UttForward& uf : members) {
      const Tensor probs = diffcore::softmax_rows(uf.fwd.logits);
      const Tensor& z = uf.fwd.ctx.head_out;
      const std::size_t frames = z.rows();
      const std::size_t vocab = z.cols();
      double per_utt = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        double expected = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
          expected += probs.at(t, v) * z.at(t, v);
        }
        per_utt += expected -
                   z.at(t, static_cast<std::size_t>(uf.utt->transcript[t]));
      }
      g_env += per_utt / static_cast<double>(frames);
    }
    g_env /= static_cast<double>(members.size());
    env_grad[group] = g_env;
    report.irm_penalty += g_env * g_env;
  }
  report.total = report.irm_penalty;

  // d(g_e^2)/d(params) via the second application of the chain rule. The
  // frame contribution c = sum_v s_v z_v - z_y splits into a path through
  // the softmax input o = irm_w * z and a direct dependence on z:
  //   dc/do_k = s_k (z_k - <s, z>)        (softmax path)
  //   dc/dz_k = s_k - [k == y]            (direct path)
  // The model backward handles the o path (which also yields the exact
  // irm_w derivative) and takes the direct part separately.
  for (const auto& [group, members] : fwd.groups) {
    const double g_env = env_grad.at(group);
    const double env_count = static_cast<double>(members.size());
    for (const UttForward& uf : members) {
      const Tensor probs = diffcore::softmax_rows(uf.fwd.logits);
      const Tensor& z = uf.fwd.ctx.head_out;
      const std::size_t frames = z.rows();
      const std::size_t vocab = z.cols();
      const double factor =
          2.0 * g_env / (env_count * static_cast<double>(frames));
      Tensor d_logits({frames, vocab});
      Tensor d_direct({frames, vocab});
      for (std::size_t t = 0; t < frames; ++t) {
        double expected = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
          expected += probs.at(t, v) * z.at(t, v);
        }
        const auto target = static_cast<std::size_t>(uf.utt->transcript[t]);
        for (std::size_t v = 0; v < vocab; ++v) {
          const double s = probs.at(t, v);
          d_logits.at(t, v) = factor * s * (z.at(t, v) - expected);
          d_direct.at(t, v) = factor * (s - (v == target ? 1.0 : 0.0));
        }
      }
      toymodel::backward(model.config, model.params, uf.fwd.ctx, d_logits,
                         &d_direct, report.grads);
    }
  }
  return report;
}

LossReport fusion(const toymodel::Model& model, const GroupedBatch& batch,
                  const FusionWeights& weights) {
  if (weights.lambda_e < 0.0 || weights.lambda_s < 0.0 ||
      weights.lambda_d < 0.0 || weights.lambda_i < 0.0 ||
      weights.sd_lambda < 0.0) {
    throw ConfigError("fusion weights must be non-negative");
  }
  LossReport erm_report = erm(model, batch);
  LossReport sd_report = sd(model, batch, weights.sd_lambda);
  LossReport dro_report = group_dro(model, batch);
  LossReport irm_report = irm(model, batch);

  LossReport report;
  report.kind = Kind::fusion;
  report.erm = erm_report.erm;
  report.sd_penalty = sd_report.sd_penalty;
  report.dro = dro_report.dro;
  report.irm_penalty = irm_report.irm_penalty;
  report.per_group_loss = dro_report.per_group_loss;
  report.worst_group = dro_report.worst_group;

  const double sd_total = weights.sd_inner_erm
                              ? sd_report.total
                              : weights.sd_lambda * sd_report.sd_penalty;
  report.total = weights.lambda_e * erm_report.total +
                 weights.lambda_s * sd_total +
                 weights.lambda_d * dro_report.total +
                 weights.lambda_i * irm_report.total;
  report.grads.add_scaled(erm_report.grads, weights.lambda_e);
  if (weights.sd_inner_erm) {
    report.grads.add_scaled(sd_report.grads, weights.lambda_s);
  } else {
    // Drop the inner empirical risk: subtract the ERM gradient embedded in
    // the SD gradient before weighting.
    GradMap penalty_only = sd_report.grads;
    penalty_only.add_scaled(erm_report.grads, -1.0);
    report.grads.add_scaled(penalty_only, weights.lambda_s);
  }
  report.grads.add_scaled(dro_report.grads, weights.lambda_d);
  report.grads.add_scaled(irm_report.grads, weights.lambda_i);
  return report;
}

LossReport compute(Kind kind, const toymodel::Model& model,
                   const GroupedBatch& batch, const FusionWeights& weights) {
  switch (kind) {
    case Kind::erm: return erm(model, batch);
    case Kind::sd: return sd(model, batch, weights.sd_lambda);
    case Kind::dro: return group_dro(model, batch);
    case Kind::irm: return irm(model, batch);
    case Kind::fusion: return fusion(model, batch, weights);
  }
  throw std::logic_error("unhandled objective kind");
}

}  // namespace fairasr::objectives
