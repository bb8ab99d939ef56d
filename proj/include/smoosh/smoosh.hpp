#pragma once

#include "smoosh/constants.hpp"
#include "smoosh/diffusion.hpp"
#include "smoosh/discrete_motion.hpp"
#include "smoosh/geometry.hpp"
#include "smoosh/lattice.hpp"
#include "smoosh/permutation.hpp"
#include "smoosh/permutation_stats.hpp"
#include "smoosh/quadrature.hpp"
#include "smoosh/random.hpp"
#include "smoosh/shadow_coupling.hpp"
