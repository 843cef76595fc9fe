#pragma once

#include "ldpo/checkpoint.hpp"
#include "ldpo/dataset.hpp"
#include "ldpo/error.hpp"
#include "ldpo/losses.hpp"
#include "ldpo/numeric.hpp"
#include "ldpo/policy.hpp"
#include "ldpo/report.hpp"
#include "ldpo/rng.hpp"
#include "ldpo/scheduler.hpp"
#include "ldpo/simplex.hpp"
#include "ldpo/trainer.hpp"
