#pragma once

#include "chaosop/error.hpp"
#include "chaosop/orthopoly.hpp"
#include "chaosop/index_sets.hpp"
#include "chaosop/design.hpp"
#include "chaosop/random_field.hpp"
#include "chaosop/linalg.hpp"
#include "chaosop/operator_fit.hpp"
#include "chaosop/uq_post.hpp"
#include "chaosop/fd_solvers.hpp"
#include "chaosop/pde_suite.hpp"
#include "chaosop/io.hpp"
#include "chaosop/csv.hpp"
#include "chaosop/model_io.hpp"
#include "chaosop/config.hpp"
#include "chaosop/bench.hpp"
