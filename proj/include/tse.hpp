#pragma once

#include "tse/box.hpp"
#include "tse/censored.hpp"
#include "tse/elliptical.hpp"
#include "tse/errors.hpp"
#include "tse/mc_oracle.hpp"
#include "tse/moments.hpp"
#include "tse/rectangle_prob.hpp"
#include "tse/risk.hpp"
#include "tse/selection.hpp"
#include "tse/truncated.hpp"
#include "tse/univariate.hpp"
#include "tse/version.hpp"
