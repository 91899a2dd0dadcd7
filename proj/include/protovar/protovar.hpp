#pragma once
// Umbrella header.

#include "data_model.hpp"
#include "error.hpp"
#include "lodo_bootstrap.hpp"
#include "metrics.hpp"
#include "noise_analysis.hpp"
#include "parallel.hpp"
#include "partitioner.hpp"
#include "report.hpp"
#include "seed.hpp"
#include "stats.hpp"
#include "synthetic.hpp"
