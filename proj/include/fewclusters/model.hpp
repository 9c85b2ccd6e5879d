#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fewclusters {

/// One row of a cluster, materialized on demand from the columnar storage.
struct Observation {
    double outcome = 0.0;
    std::vector<double> covariates;
    std::optional<bool> period_post;
};

/**
 * A cluster of observations sharing one treatment flag.
 *
 * Storage is columnar: `outcome` has one entry per observation, `covariates`
 * is an (m x d) matrix with d possibly zero, and `post` is either empty (no
 * period information) or holds one 0/1 flag per observation.
 */
struct Cluster {
    std::string id;
    bool treated = false;
    Eigen::VectorXd outcome;
    Eigen::MatrixXd covariates;
    std::vector<std::uint8_t> post;

    std::size_t size() const noexcept { return static_cast<std::size_t>(outcome.size()); }
    std::size_t covariate_dim() const noexcept { return static_cast<std::size_t>(covariates.cols()); }
    bool has_period_flag() const noexcept { return !post.empty(); }

    Observation observation(std::size_t i) const;

    /// Builds a cluster from row records. Throws EmptyCluster or
    /// RaggedCovariates; a period flag present on some rows but not others
    /// throws MissingPeriodFlag.
    static Cluster from_observations(std::string id, bool treated,
                                     std::span<const Observation> rows);
};

/// Treated clusters occupy indices [0, q1), untreated [q1, q1 + q0).
struct ClusterLayout {
    std::size_t q1 = 0;
    std::size_t q0 = 0;

    std::size_t q() const noexcept { return q1 + q0; }
    bool balanced() const noexcept { return q1 == q0; }
    friend bool operator==(const ClusterLayout&, const ClusterLayout&) = default;
};

/// Validates the clusters and stably reorders them treated-first.
ClusterLayout validate_dataset(std::vector<Cluster>& clusters);

/// Clusters in canonical treated-first order together with their layout.
class ClusterDataset {
public:
    ClusterDataset() = default;
    explicit ClusterDataset(std::vector<Cluster> clusters);

    const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
    const Cluster& operator[](std::size_t k) const { return clusters_[k]; }
    std::size_t size() const noexcept { return clusters_.size(); }
    const ClusterLayout& layout() const noexcept { return layout_; }
    std::size_t total_observations() const noexcept;
    std::size_t covariate_dim() const noexcept;

    /// 64-bit FNV-1a hash over ids, flags and the bit patterns of all values.
    std::uint64_t fingerprint() const noexcept;

private:
    std::vector<Cluster> clusters_;
    ClusterLayout layout_;
};

/// Per-cluster scalar estimates in canonical order.
class EstimateVector {
public:
    EstimateVector(std::vector<double> values, ClusterLayout layout);

    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t k) const { return values_[k]; }
    std::size_t size() const noexcept { return values_.size(); }
    const ClusterLayout& layout() const noexcept { return layout_; }

    EstimateVector negated() const;

private:
    std::vector<double> values_;
    ClusterLayout layout_;
};

/// A placebo labeling: the sorted 0-based indices designated treated.
struct Assignment {
    std::vector<std::uint32_t> treated;

    static Assignment identity(const ClusterLayout& layout);
    bool is_identity() const noexcept;
    friend bool operator==(const Assignment&, const Assignment&) = default;
};

enum class Side { Greater, Less, TwoSided };
enum class Adjustment { Adjusted, Unadjusted };

std::string_view to_string(Side side) noexcept;
Side side_from_string(std::string_view text);

struct TestConfig {
    double alpha = 0.05;
    Side side = Side::Greater;
    Adjustment adjustment = Adjustment::Adjusted;
    std::optional<std::size_t> max_assignments;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Warning { ZeroPower };
std::string_view to_string(Warning w) noexcept;

struct TestResult {
    double statistic = 0.0;
    double critical_value = 0.0;
    double p_value = 1.0;
    bool reject = false;
    std::size_t n_assignments = 0;
    std::optional<double> randomized_threshold;
    bool randomized = false;
    std::vector<Warning> warnings;

    bool has_warning(Warning w) const noexcept;
};

}  // namespace fewclusters
