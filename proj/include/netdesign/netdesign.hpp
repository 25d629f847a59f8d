#pragma once

// Everything: model, solvers, designers, oracles and file formats.

#include "netdesign/connectivity.hpp"
#include "netdesign/convex_solver.hpp"
#include "netdesign/demos.hpp"
#include "netdesign/errors.hpp"
#include "netdesign/io/json_writer.hpp"
#include "netdesign/io/run_design.hpp"
#include "netdesign/io/scenario.hpp"
#include "netdesign/io/svg.hpp"
#include "netdesign/network_model.hpp"
#include "netdesign/resistive_core.hpp"
#include "netdesign/robust_designer.hpp"
#include "netdesign/sparse_designer.hpp"
#include "netdesign/verify.hpp"
