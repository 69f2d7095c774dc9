#pragma once

#include "gmmot/baselines.hpp"
#include "gmmot/core.hpp"
#include "gmmot/data.hpp"
#include "gmmot/eval.hpp"
#include "gmmot/gaussian.hpp"
#include "gmmot/gmm.hpp"
#include "gmmot/gmm_otda.hpp"
#include "gmmot/ot.hpp"
