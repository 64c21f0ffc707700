#pragma once

#include "malekeh/adaptive.hpp"
#include "malekeh/cache_table.hpp"
#include "malekeh/ccu.hpp"
#include "malekeh/config.hpp"
#include "malekeh/engine.hpp"
#include "malekeh/metrics.hpp"
#include "malekeh/policies.hpp"
#include "malekeh/profiler.hpp"
#include "malekeh/trace.hpp"
