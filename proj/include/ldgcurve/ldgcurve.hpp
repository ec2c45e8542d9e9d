#pragma once

#include "ldgcurve/anisotropy.hpp"
#include "ldgcurve/convergence.hpp"
#include "ldgcurve/curves.hpp"
#include "ldgcurve/diagnostics.hpp"
#include "ldgcurve/error.hpp"
#include "ldgcurve/experiment.hpp"
#include "ldgcurve/flow_solver.hpp"
#include "ldgcurve/io.hpp"
#include "ldgcurve/mesh_basis.hpp"
#include "ldgcurve/polygon.hpp"
