#pragma once

#include "rsr/combinatorics.hpp"
#include "rsr/datadriven.hpp"
#include "rsr/errors.hpp"
#include "rsr/harness.hpp"
#include "rsr/io.hpp"
#include "rsr/lti.hpp"
#include "rsr/model.hpp"
#include "rsr/reconstruct.hpp"
#include "rsr/rng.hpp"
#include "rsr/support_uncertainty.hpp"
