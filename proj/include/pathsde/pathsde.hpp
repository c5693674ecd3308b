#pragma once

#include "pathsde/bounded_exit.hpp"
#include "pathsde/brownian.hpp"
#include "pathsde/diagnostics.hpp"
#include "pathsde/error.hpp"
#include "pathsde/exit_series.hpp"
#include "pathsde/experiments.hpp"
#include "pathsde/linalg.hpp"
#include "pathsde/rng.hpp"
#include "pathsde/sde_model.hpp"
#include "pathsde/stats.hpp"
#include "pathsde/steppers.hpp"
