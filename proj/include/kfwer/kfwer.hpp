#pragma once

// Umbrella header.

#include "kfwer/baselines.hpp"
#include "kfwer/csv.hpp"
#include "kfwer/dataset.hpp"
#include "kfwer/error.hpp"
#include "kfwer/error_rates.hpp"
#include "kfwer/knockoff.hpp"
#include "kfwer/lasso.hpp"
#include "kfwer/rng.hpp"
#include "kfwer/select.hpp"
#include "kfwer/simulation.hpp"
#include "kfwer/version.hpp"
