#pragma once

#include "dnmpc/rational.hpp"
#include "dnmpc/core_model.hpp"
#include "dnmpc/ocp_solver.hpp"
#include "dnmpc/info_store.hpp"
#include "dnmpc/covering_scheduler.hpp"
#include "dnmpc/run_trace.hpp"
#include "dnmpc/sim_harness.hpp"
#include "dnmpc/stability_lab.hpp"
#include "dnmpc/bridge_world.hpp"
#include "dnmpc/bridge_json.hpp"
#include "dnmpc/scenario_config.hpp"
