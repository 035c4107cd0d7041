#pragma once

#include "segprover/core.hpp"            // IWYU pragma: export
#include "segprover/goal_blocks.hpp"     // IWYU pragma: export
#include "segprover/script_parser.hpp"   // IWYU pragma: export
#include "segprover/tokenizer.hpp"       // IWYU pragma: export
#include "segprover/edit_distance.hpp"   // IWYU pragma: export
#include "segprover/io.hpp"              // IWYU pragma: export
#include "segprover/boundary.hpp"        // IWYU pragma: export
#include "segprover/transport.hpp"       // IWYU pragma: export
#include "segprover/protocol.hpp"        // IWYU pragma: export
#include "segprover/sim_env.hpp"         // IWYU pragma: export
#include "segprover/replay.hpp"          // IWYU pragma: export
#include "segprover/policy.hpp"          // IWYU pragma: export
#include "segprover/search.hpp"          // IWYU pragma: export
#include "segprover/metrics.hpp"         // IWYU pragma: export
#include "segprover/pipeline.hpp"        // IWYU pragma: export
