#pragma once

#include "rollout/clustering.hpp"
#include "rollout/design.hpp"
#include "rollout/estimators.hpp"
#include "rollout/graph.hpp"
#include "rollout/harness.hpp"
#include "rollout/json_io.hpp"
#include "rollout/outcomes.hpp"
#include "rollout/rational.hpp"
#include "rollout/rng.hpp"
#include "rollout/theory.hpp"
#include "rollout/verify.hpp"
