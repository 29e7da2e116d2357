#pragma once

#include "gridshield/grid.hpp"
#include "gridshield/environment.hpp"
#include "gridshield/shield.hpp"
#include "gridshield/policy.hpp"
#include "gridshield/agent.hpp"
#include "gridshield/rollout.hpp"
#include "gridshield/training.hpp"
#include "gridshield/grids.hpp"
#include "gridshield/io.hpp"
#include "gridshield/harness.hpp"
