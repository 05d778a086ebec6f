#pragma once

// Umbrella header.

#include "dqp/bench.hpp"
#include "dqp/config.hpp"
#include "dqp/inference.hpp"
#include "dqp/io.hpp"
#include "dqp/kernel.hpp"
#include "dqp/layout.hpp"
#include "dqp/likelihood.hpp"
#include "dqp/mcmc.hpp"
#include "dqp/piecewise.hpp"
#include "dqp/prior.hpp"
#include "dqp/rng.hpp"
#include "dqp/special.hpp"
#include "dqp/stochastic.hpp"
