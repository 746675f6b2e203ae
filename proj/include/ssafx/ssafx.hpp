#pragma once

#include <ssafx/backtest.hpp>
#include <ssafx/error.hpp>
#include <ssafx/jacobi.hpp>
#include <ssafx/nonlinear.hpp>
#include <ssafx/quotes.hpp>
#include <ssafx/random.hpp>
#include <ssafx/ssa.hpp>
#include <ssafx/strategy.hpp>
#include <ssafx/synthetic.hpp>
