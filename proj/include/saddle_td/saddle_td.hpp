#pragma once

#include "saddle_td/errors.hpp"
#include "saddle_td/core_model.hpp"
#include "saddle_td/rng.hpp"
#include "saddle_td/empirical_stats.hpp"
#include "saddle_td/gradient_engine.hpp"
#include "saddle_td/spectral_analysis.hpp"
#include "saddle_td/solvers.hpp"
#include "saddle_td/environments.hpp"
#include "saddle_td/dataset_io.hpp"
#include "saddle_td/trace_io.hpp"
