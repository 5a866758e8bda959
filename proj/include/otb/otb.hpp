#pragma once

#include "otb/balancing.hpp"
#include "otb/cg.hpp"
#include "otb/core.hpp"
#include "otb/ipm.hpp"
#include "otb/magic.hpp"
#include "otb/plan.hpp"
#include "otb/registration.hpp"
#include "otb/support.hpp"
