#pragma once

#include "bidask/bs_pricing.hpp"
#include "bidask/cev_model.hpp"
#include "bidask/cli.hpp"
#include "bidask/error_calculus.hpp"
#include "bidask/errors.hpp"
#include "bidask/local_vol.hpp"
#include "bidask/normal.hpp"
#include "bidask/pnl_analysis.hpp"
#include "bidask/rng.hpp"
#include "bidask/sde_engine.hpp"
