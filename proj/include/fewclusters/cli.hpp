#pragma once

#include "fewclusters/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace fewclusters::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitInapplicable = 3;

/**
 * Reads clustered data from CSV. Required columns: cluster_id, treated
 * (0/1), outcome. Optional: post (0/1) and covariates x1..xd, which must be
 * numbered consecutively from 1. Rows of one cluster may be interleaved
 * with other clusters; the treated flag must be constant within a cluster.
 * Throws Error(Parse) on malformed input.
 */
ClusterDataset read_cluster_csv(std::istream& in);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fewclusters::cli
