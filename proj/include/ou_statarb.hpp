#pragma once

#include "ou_statarb/calibration.hpp"
#include "ou_statarb/errors.hpp"
#include "ou_statarb/optimizer.hpp"
#include "ou_statarb/ou_analytics.hpp"
#include "ou_statarb/parallel.hpp"
#include "ou_statarb/pipeline.hpp"
#include "ou_statarb/random.hpp"
#include "ou_statarb/report.hpp"
#include "ou_statarb/simulation.hpp"
#include "ou_statarb/special_functions.hpp"
#include "ou_statarb/strategy.hpp"
