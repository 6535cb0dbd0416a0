#pragma once

#include "gsb/spd.hpp"
#include "gsb/gaussian.hpp"
#include "gsb/riccati.hpp"
#include "gsb/bridge.hpp"
#include "gsb/sinkhorn.hpp"
#include "gsb/rng.hpp"
#include "gsb/oracle.hpp"
