#pragma once

#include "light/modules.hpp"
#include "light/ops_resize.hpp"

namespace light {

struct GctiConfig {
  bool share_gate_params = false;  // one gate encoder per target pass instead of per source
  bool height_target_only = false;  // restrict interaction targets to the height feature
  int kernel = 3;
};

// Resizes a source feature to the target's spatial size (bilinear,
// half-pixel convention). Channel count is unchanged.
template <typename T>
Var<T> align_source(const Var<T>& f, int target_h, int target_w) {
  return bilinear_resize(f, target_h, target_w);
}

// Conv -> gate feature, Conv -> sigmoid -> gate map in (0,1).
// Initialization keeps the module close to a pass-through: Conv_1 starts at
// a noisy identity and Conv_2's negative bias starts the gates mostly
// closed, so an untrained interaction barely perturbs the pyramid.
template <typename T>
struct GateEncode {
  Conv2d<T> conv1, conv2;

  GateEncode() = default;
  GateEncode(ParamRegistry<T>& reg, const std::string& name, int channels, int kernel,
             Rng& rng) {
    conv1 = Conv2d<T>(reg, name + ".conv1", channels, channels, kernel, 1, kernel / 2, rng,
                      true, 0.0);
    conv1.w.val_mut() = dirac_kernel<T>(channels, kernel, rng, 0.01);
    conv2 = Conv2d<T>(reg, name + ".conv2", channels, channels, kernel, 1, kernel / 2, rng,
                      true, 0.01);
    conv2.b.val_mut().fill(T(-2));
  }

  std::pair<Var<T>, Var<T>> operator()(const Var<T>& f) const {
    auto fg = conv1(f);
    auto gate = sigmoid(conv2(fg));
    return {fg, gate};
  }
};

// F_agg = sum_i M_i (.) F_i^g.
template <typename T>
Var<T> aggregate_sources(const std::vector<std::pair<Var<T>, Var<T>>>& gated) {
  check_shape(!gated.empty(), "aggregate_sources: no sources");
  Var<T> acc;
  for (size_t i = 0; i < gated.size(); ++i) {
    const auto& [gate, feat] = gated[i];
    check_shape(gate.val().shape == feat.val().shape &&
                    (i == 0 || gate.val().shape == acc.val().shape),
                "aggregate_sources: source " + std::to_string(i) + " shape " +
                    feat.val().shape_str() + " does not match");
    auto term = mul(gate, feat);
    acc = i == 0 ? term : add(acc, term);
  }
  return acc;
}

// F'_agg = (1 + M_t) (.) F_t^g + (1 - M_t) (.) F_agg.
template <typename T>
Var<T> gated_fusion(const Var<T>& target_gate_feat, const Var<T>& target_gate,
                    const Var<T>& aggregated) {
  require_same_shape(target_gate_feat.val(), target_gate.val(), "gated_fusion");
  require_same_shape(target_gate_feat.val(), aggregated.val(), "gated_fusion");
  auto boosted = mul(add_scalar(target_gate, T(1)), target_gate_feat);
  auto damped = mul(add_scalar(mul_scalar(target_gate, T(-1)), T(1)), aggregated);
  return add(boosted, damped);
}

// F_out = Conv(F'_agg) + F'_agg. Zero-initialized Conv makes this the identity.
template <typename T>
Var<T> interaction_output(const Var<T>& fused, const Conv2d<T>& out_conv) {
  return add(out_conv(fused), fused);
}

// One interaction pass for a fixed target position.
template <typename T>
struct GctiUnit {
  GateEncode<T> target_enc;
  std::vector<GateEncode<T>> source_encs;  // empty when parameters are shared
  Conv2d<T> out_conv;
  bool shared = false;

  GctiUnit() = default;
  GctiUnit(ParamRegistry<T>& reg, const std::string& name, int channels, int n_sources,
           const GctiConfig& cfg, Rng& rng) {
    shared = cfg.share_gate_params;
    target_enc = GateEncode<T>(reg, name + ".target", channels, cfg.kernel, rng);
    if (!shared)
      for (int i = 0; i < n_sources; ++i)
        source_encs.emplace_back(reg, name + ".src" + std::to_string(i), channels,
                                 cfg.kernel, rng);
    // Small output conv keeps the residual branch near the identity at init.
    out_conv = Conv2d<T>(reg, name + ".out", channels, channels, cfg.kernel, 1,
                         cfg.kernel / 2, rng, true, 0.01);
  }

  Var<T> operator()(const Var<T>& target, const std::vector<Var<T>>& sources) const {
    int th = target.val().dim(2), tw = target.val().dim(3);
    std::vector<std::pair<Var<T>, Var<T>>> gated;  // (gate map, gate feature)
    for (size_t i = 0; i < sources.size(); ++i) {
      auto aligned = align_source(sources[i], th, tw);
      const auto& enc = shared ? target_enc : source_encs[i];
      auto [fg, gate] = enc(aligned);
      gated.emplace_back(gate, fg);
    }
    auto [fg_t, gate_t] = target_enc(target);
    auto agg = aggregate_sources(gated);
    auto fused = gated_fusion(fg_t, gate_t, agg);
    return interaction_output(fused, out_conv);
  }
};

// Full cross-task interaction over the pyramid {F_1..F_l} plus the height
// feature F_h. Each feature takes one turn as target with every other
// feature as a source; all passes read the original (pre-enhancement)
// features and the results are swapped in together.
template <typename T>
struct Gcti {
  GctiConfig cfg;
  std::vector<GctiUnit<T>> level_units;  // one per pyramid level (empty if height-only)
  GctiUnit<T> height_unit;

  Gcti() = default;
  Gcti(ParamRegistry<T>& reg, int channels, int n_levels, const GctiConfig& c, Rng& rng)
      : cfg(c) {
    if (!cfg.height_target_only)
      for (int i = 0; i < n_levels; ++i)
        level_units.emplace_back(reg, "gcti.t" + std::to_string(i), channels, n_levels, cfg,
                                 rng);
    height_unit = GctiUnit<T>(reg, "gcti.th", channels, n_levels, cfg, rng);
  }

  // Returns {enhanced levels, enhanced height feature}.
  std::pair<std::vector<Var<T>>, Var<T>> operator()(const std::vector<Var<T>>& levels,
                                                    const Var<T>& height_feat) const {
    std::vector<Var<T>> enhanced(levels.size());
    for (size_t t = 0; t < levels.size(); ++t) {
      if (cfg.height_target_only) {
        enhanced[t] = levels[t];
        continue;
      }
      std::vector<Var<T>> sources;
      for (size_t i = 0; i < levels.size(); ++i)
        if (i != t) sources.push_back(levels[i]);
      sources.push_back(height_feat);
      enhanced[t] = level_units[t](levels[t], sources);
    }
    auto fh = height_unit(height_feat, levels);
    return {std::move(enhanced), std::move(fh)};
  }
};

}  // namespace light
