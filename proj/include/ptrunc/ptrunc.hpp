#pragma once

#include "ptrunc/bootstrap.hpp"
#include "ptrunc/bridge.hpp"
#include "ptrunc/data.hpp"
#include "ptrunc/error.hpp"
#include "ptrunc/estimators.hpp"
#include "ptrunc/linalg.hpp"
#include "ptrunc/simulation.hpp"
#include "ptrunc/step_function.hpp"
#include "ptrunc/survival.hpp"
