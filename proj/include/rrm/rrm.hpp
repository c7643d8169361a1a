#pragma once

// SPDX-License-Identifier: Apache-2.0

// Umbrella header. The HTTP backend is separate: include rrm/http_backend.hpp.

#include "rrm/backend.hpp"
#include "rrm/config.hpp"
#include "rrm/denoise.hpp"
#include "rrm/errors.hpp"
#include "rrm/eval.hpp"
#include "rrm/hash.hpp"
#include "rrm/mock_backend.hpp"
#include "rrm/parallel.hpp"
#include "rrm/proof_selection.hpp"
#include "rrm/rationale.hpp"
#include "rrm/ranking.hpp"
#include "rrm/records_io.hpp"
#include "rrm/reward.hpp"
#include "rrm/selftrain.hpp"
#include "rrm/templates.hpp"
#include "rrm/text.hpp"
#include "rrm/types.hpp"
