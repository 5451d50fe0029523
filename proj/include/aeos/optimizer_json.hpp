#pragma once

// JSON form of OptimizerSpec:
//   {"eta": 1e-4,
//    "momentum": {"kind": "EmaHB", "beta1": 0.9},
//    "precond":  {"kind": "AdamNoBC", "beta2": 0.999, "epsilon": 1e-7, "exponent": 0.5,
//                 "fixed_values": [...]   // FixedDiagonal only
//   },
//   "weight_decay": 0.0}   // decoupled, AdamW style
// Missing fields take the library defaults.

#include <nlohmann/json.hpp>

#include <vector>

#include "aeos/optimizers.hpp"

namespace aeos {

inline nlohmann::json to_json(const OptimizerSpec& spec) {
  nlohmann::json precond = {{"kind", std::string(to_string(spec.precond.kind))},
                            {"beta2", spec.precond.beta2},
                            {"epsilon", spec.precond.epsilon},
                            {"exponent", spec.precond.exponent}};
  if (spec.precond.fixed_values) {
    const auto& f = *spec.precond.fixed_values;
    precond["fixed_values"] = std::vector<double>(f.data(), f.data() + f.size());
  }
  nlohmann::json out = {
      {"eta", spec.eta},
      {"momentum",
       {{"kind", std::string(to_string(spec.momentum.kind))}, {"beta1", spec.momentum.beta1}}},
      {"precond", precond}};
  if (spec.weight_decay != 0.0) out["weight_decay"] = spec.weight_decay;
  return out;
}

inline OptimizerSpec optimizer_spec_from_json(const nlohmann::json& j) {
  OptimizerSpec s;
  s.eta = j.at("eta").get<double>();
  if (j.contains("momentum")) {
    const auto& m = j.at("momentum");
    s.momentum.kind = momentum_kind_from_string(m.value("kind", std::string("None")));
    s.momentum.beta1 = m.value("beta1", 0.0);
  }
  if (j.contains("precond")) {
    const auto& p = j.at("precond");
    s.precond.kind = precond_kind_from_string(p.value("kind", std::string("Identity")));
    s.precond.beta2 = p.value("beta2", 0.999);
    s.precond.epsilon = p.value("epsilon", kDefaultEpsilon);
    const double default_exp =
        s.precond.kind == PrecondKind::Padam ? kDefaultPadamExponent : 0.5;
    s.precond.exponent = p.value("exponent", default_exp);
    if (p.contains("fixed_values")) {
      const auto v = p.at("fixed_values").get<std::vector<double>>();
      s.precond.fixed_values = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
  }
  s.weight_decay = j.value("weight_decay", 0.0);
  validate(s);
  return s;
}

}  // namespace aeos
