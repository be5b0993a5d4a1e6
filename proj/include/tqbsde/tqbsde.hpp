#pragma once

#include "tqbsde/bmo.hpp"
#include "tqbsde/cli_io.hpp"
#include "tqbsde/constants.hpp"
#include "tqbsde/errors.hpp"
#include "tqbsde/fixedpoint.hpp"
#include "tqbsde/global_solver.hpp"
#include "tqbsde/grid_paths.hpp"
#include "tqbsde/model.hpp"
#include "tqbsde/parallel.hpp"
#include "tqbsde/pathdep.hpp"
#include "tqbsde/regress.hpp"
#include "tqbsde/rng.hpp"
#include "tqbsde/scalar_solver.hpp"
#include "tqbsde/tensor.hpp"
