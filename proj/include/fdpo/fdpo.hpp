#pragma once

// Umbrella header.

#include "fdpo/core.hpp"
#include "fdpo/util.hpp"
#include "fdpo/transform.hpp"
#include "fdpo/io.hpp"
#include "fdpo/prompt_templates.hpp"
#include "fdpo/judge.hpp"
#include "fdpo/corrupt.hpp"
#include "fdpo/pipeline.hpp"
#include "fdpo/policy.hpp"
#include "fdpo/objective.hpp"
#include "fdpo/metrics.hpp"
#include "fdpo/trainer.hpp"
#include "fdpo/synthetic.hpp"
