#pragma once

#include "asymptotics.hpp"
#include "bound.hpp"
#include "calibration.hpp"
#include "harness.hpp"
#include "model.hpp"
#include "piecewise.hpp"
#include "pot.hpp"
#include "transform.hpp"
