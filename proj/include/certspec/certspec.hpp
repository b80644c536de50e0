#pragma once

#include "certspec/types.hpp"
#include "certspec/diag.hpp"
#include "certspec/rng.hpp"
#include "certspec/param_box.hpp"
#include "certspec/theta_expr.hpp"
#include "certspec/matrix_market.hpp"
#include "certspec/affine_operator.hpp"
#include "certspec/spectral_problem.hpp"
#include "certspec/eig_core.hpp"
#include "certspec/lp.hpp"
#include "certspec/lower_bound.hpp"
#include "certspec/global_opt.hpp"
#include "certspec/eig_framework.hpp"
#include "certspec/sv_framework.hpp"
#include "certspec/generators.hpp"
#include "certspec/config.hpp"
#include "certspec/reduced_model.hpp"
#include "certspec/cli_io.hpp"
