#pragma once

#include "basis.hpp"
#include "cavi.hpp"
#include "dgp.hpp"
#include "errors.hpp"
#include "forecast.hpp"
#include "gibbs.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "special.hpp"
