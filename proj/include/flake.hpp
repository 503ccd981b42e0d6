#pragma once

// Umbrella header: pulls in the whole library.

#include "flake/crypto.hpp"
#include "flake/data.hpp"
#include "flake/envelope.hpp"
#include "flake/error.hpp"
#include "flake/gram.hpp"
#include "flake/linalg.hpp"
#include "flake/masking.hpp"
#include "flake/matrix.hpp"
#include "flake/net.hpp"
#include "flake/orchestrator.hpp"
#include "flake/protocol.hpp"
#include "flake/registry.hpp"
#include "flake/report.hpp"
#include "flake/rng.hpp"
#include "flake/svm.hpp"
#include "flake/wire.hpp"
