#pragma once

// Umbrella header.

#include "dac/adaptation.hpp"
#include "dac/analysis.hpp"
#include "dac/coercivity.hpp"
#include "dac/config.hpp"
#include "dac/controller.hpp"
#include "dac/error.hpp"
#include "dac/experiment.hpp"
#include "dac/linalg.hpp"
#include "dac/lyapunov.hpp"
#include "dac/observer.hpp"
#include "dac/report.hpp"
#include "dac/rk4.hpp"
#include "dac/sim_engine.hpp"
#include "dac/spatial_model.hpp"
