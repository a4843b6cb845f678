#pragma once

#include "lmc/adam.hpp"
#include "lmc/augment.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/config.hpp"
#include "lmc/connectivity.hpp"
#include "lmc/curvature.hpp"
#include "lmc/data.hpp"
#include "lmc/engine.hpp"
#include "lmc/errors.hpp"
#include "lmc/format.hpp"
#include "lmc/hessian.hpp"
#include "lmc/loss.hpp"
#include "lmc/metrics.hpp"
#include "lmc/network.hpp"
#include "lmc/power_iteration.hpp"
#include "lmc/replay.hpp"
#include "lmc/report.hpp"
#include "lmc/rng.hpp"
#include "lmc/strategy.hpp"
#include "lmc/stream.hpp"
#include "lmc/training.hpp"
#include "lmc/weights.hpp"
