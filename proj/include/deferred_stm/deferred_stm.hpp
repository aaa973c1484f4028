#pragma once

#include "deferred_stm/bench.hpp"
#include "deferred_stm/block_output.hpp"
#include "deferred_stm/deferred_core.hpp"
#include "deferred_stm/executor.hpp"
#include "deferred_stm/mvhashmap.hpp"
#include "deferred_stm/oracle.hpp"
#include "deferred_stm/rng.hpp"
#include "deferred_stm/scheduler.hpp"
#include "deferred_stm/state.hpp"
#include "deferred_stm/txn_model.hpp"
#include "deferred_stm/types.hpp"
#include "deferred_stm/workloads.hpp"
