#pragma once

#include "pmlab/cone.hpp"
#include "pmlab/config.hpp"
#include "pmlab/csv.hpp"
#include "pmlab/errors.hpp"
#include "pmlab/experiments.hpp"
#include "pmlab/grid.hpp"
#include "pmlab/maps.hpp"
#include "pmlab/martingale.hpp"
#include "pmlab/montecarlo.hpp"
#include "pmlab/observable.hpp"
#include "pmlab/parallel.hpp"
#include "pmlab/quadrature.hpp"
#include "pmlab/rng.hpp"
#include "pmlab/runner.hpp"
#include "pmlab/stats.hpp"
#include "pmlab/transfer.hpp"
#include "pmlab/ulam.hpp"
