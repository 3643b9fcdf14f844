#pragma once

// Umbrella header for the nalm library.

#include "nalm/matrix.hpp"
#include "nalm/random.hpp"
#include "nalm/tape.hpp"
#include "nalm/gradcheck.hpp"
#include "nalm/layers.hpp"
#include "nalm/stochastic.hpp"
#include "nalm/tasks.hpp"
#include "nalm/model.hpp"
#include "nalm/trainer.hpp"
#include "nalm/metrics.hpp"
#include "nalm/analysis.hpp"
#include "nalm/io.hpp"
#include "nalm/config.hpp"
#include "nalm/experiment.hpp"
#include "nalm/verify.hpp"
