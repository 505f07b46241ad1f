#pragma once

#include "nearcrit/conditions.hpp"
#include "nearcrit/core.hpp"
#include "nearcrit/counterexample.hpp"
#include "nearcrit/expression.hpp"
#include "nearcrit/geometry.hpp"
#include "nearcrit/lyapunov.hpp"
#include "nearcrit/model.hpp"
#include "nearcrit/parallel.hpp"
#include "nearcrit/simulate.hpp"
#include "nearcrit/spectral.hpp"
