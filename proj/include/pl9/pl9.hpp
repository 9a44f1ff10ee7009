#pragma once

// umbrella header

#include "pl9/engine.hpp"
#include "pl9/interval_set.hpp"
#include "pl9/lexer.hpp"
#include "pl9/lower.hpp"
#include "pl9/mip.hpp"
#include "pl9/model.hpp"
#include "pl9/parser.hpp"
#include "pl9/planner.hpp"
#include "pl9/program.hpp"
#include "pl9/sat.hpp"
#include "pl9/tabling.hpp"
#include "pl9/term.hpp"
#include "pl9/writer.hpp"
