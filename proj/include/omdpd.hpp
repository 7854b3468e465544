#pragma once

#include "omdpd/errors.hpp"
#include "omdpd/tensor.hpp"
#include "omdpd/cmdp.hpp"
#include "omdpd/env.hpp"
#include "omdpd/estimator.hpp"
#include "omdpd/simplex.hpp"
#include "omdpd/polytope.hpp"
#include "omdpd/baseline.hpp"
#include "omdpd/metrics.hpp"
#include "omdpd/learner.hpp"
#include "omdpd/config.hpp"
#include "omdpd/report.hpp"
#include "omdpd/experiment.hpp"
