#pragma once
// Umbrella header.

#include "dlac/baselines.hpp"
#include "dlac/diagnostics.hpp"
#include "dlac/errors.hpp"
#include "dlac/integrator.hpp"
#include "dlac/io.hpp"
#include "dlac/mdp.hpp"
#include "dlac/nn.hpp"
#include "dlac/policy.hpp"
#include "dlac/process.hpp"
#include "dlac/steady_state.hpp"
#include "dlac/trainer.hpp"
#include "dlac/training.hpp"
