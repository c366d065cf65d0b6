#pragma once

#include "pncuq/data.hpp"
#include "pncuq/errors.hpp"
#include "pncuq/harness.hpp"
#include "pncuq/inference.hpp"
#include "pncuq/krr.hpp"
#include "pncuq/network.hpp"
#include "pncuq/ntk.hpp"
#include "pncuq/pnc.hpp"
#include "pncuq/quantiles.hpp"
#include "pncuq/rng.hpp"
