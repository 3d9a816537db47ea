#pragma once

#include "stark/error.hpp"
#include "stark/flags.hpp"
#include "stark/probe.hpp"
#include "stark/linalg.hpp"
#include "stark/hamiltonians.hpp"
#include "stark/spectra.hpp"
#include "stark/metrology.hpp"
#include "stark/scaling.hpp"
#include "stark/sweep.hpp"
#include "stark/analysis.hpp"
#include "stark/svg.hpp"
