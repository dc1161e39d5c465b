#pragma once
// Fixed-input controllers used as comparison baselines.

#include "dlac/mdp.hpp"

namespace dlac {

/// The steady input paired with a reference.
inline HeatInputs open_loop_action(const ReferencePair& ref) { return ref.input; }

/// Applies the steady input of whichever reference is active; ignores the measured state, so its
/// action switches exactly when the reference does.
class OpenLoopController : public Controller {
 public:
  HeatInputs act(const ProcessState&, const ReferencePair& ref, Rng&) override { return open_loop_action(ref); }
};

/// Holds one input regardless of state and reference.
class ConstantController : public Controller {
 public:
  explicit ConstantController(HeatInputs a) : a_(a) {}
  HeatInputs act(const ProcessState&, const ReferencePair&, Rng&) override { return a_; }

 private:
  HeatInputs a_;
};

}  // namespace dlac
