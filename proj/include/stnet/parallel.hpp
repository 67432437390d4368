// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace stnet {

/// Worker cap: STNET_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Splits [0, n) into contiguous chunks, one per worker, and calls
/// body(begin, end) for each. Chunk boundaries depend only on n and the
/// worker count. The first exception thrown by a worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace stnet
