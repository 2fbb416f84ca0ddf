#pragma once

#include "popgame/population.hpp"
#include "popgame/linalg.hpp"
#include "popgame/supply_rate.hpp"
#include "popgame/numeric.hpp"
#include "popgame/edm.hpp"
#include "popgame/delay.hpp"
#include "popgame/envelope.hpp"
#include "popgame/games.hpp"
#include "popgame/pdm.hpp"
#include "popgame/solver.hpp"
#include "popgame/certify.hpp"
#include "popgame/sim.hpp"
#include "popgame/scenario.hpp"
