#ifndef GRPO_AGG_GRPO_AGG_HPP_
#define GRPO_AGG_GRPO_AGG_HPP_

#include "grpo_agg/binary.hpp"
#include "grpo_agg/core.hpp"
#include "grpo_agg/divergence.hpp"
#include "grpo_agg/oracle.hpp"
#include "grpo_agg/preference.hpp"
#include "grpo_agg/solver.hpp"
#include "grpo_agg/trainer.hpp"

#endif  // GRPO_AGG_GRPO_AGG_HPP_
