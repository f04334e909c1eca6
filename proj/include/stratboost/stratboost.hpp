#pragma once

#include "stratboost/boosting.hpp"
#include "stratboost/common.hpp"
#include "stratboost/dataset.hpp"
#include "stratboost/inference.hpp"
#include "stratboost/io.hpp"
#include "stratboost/likelihood.hpp"
#include "stratboost/parallel.hpp"
#include "stratboost/rng.hpp"
#include "stratboost/simulate.hpp"
#include "stratboost/stopping.hpp"
