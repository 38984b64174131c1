#pragma once

#include "anova/error.hpp"
#include "anova/rng.hpp"
#include "anova/parallel.hpp"
#include "anova/quadrature.hpp"
#include "anova/marginals.hpp"
#include "anova/target.hpp"
#include "anova/anova_core.hpp"
#include "anova/product_form.hpp"
#include "anova/smoothness.hpp"
#include "anova/oracle.hpp"
#include "anova/quasi_independence.hpp"
#include "anova/builtins.hpp"
#include "anova/experiments.hpp"
#include "anova/io.hpp"
