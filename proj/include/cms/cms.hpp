#pragma once

// Umbrella header for the whole library.

#include "cms/common.hpp"
#include "cms/control.hpp"
#include "cms/envelopes.hpp"
#include "cms/hydraulics.hpp"
#include "cms/inp.hpp"
#include "cms/lp.hpp"
#include "cms/netmodel.hpp"
#include "cms/obbt.hpp"
#include "cms/orchestrator.hpp"
#include "cms/profile.hpp"
#include "cms/relaxation.hpp"
#include "cms/sampler.hpp"
#include "cms/scc.hpp"
