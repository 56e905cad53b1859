// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_DAPP_HPP
#define DAPP_DAPP_HPP

#include "dapp/core.hpp"
#include "dapp/dp.hpp"
#include "dapp/errors.hpp"
#include "dapp/first_stage.hpp"
#include "dapp/gp.hpp"
#include "dapp/io.hpp"
#include "dapp/math.hpp"
#include "dapp/polya_gamma.hpp"
#include "dapp/predictive.hpp"
#include "dapp/rng.hpp"
#include "dapp/sampler.hpp"
#include "dapp/simulator.hpp"
#include "dapp/version.hpp"

#endif
