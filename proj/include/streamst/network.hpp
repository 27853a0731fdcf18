#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "streamst/types.hpp"

namespace streamst {

inline constexpr int kOutlet = -1;

struct SegmentRecord {
    int rid = 0;
    int to_rid = kOutlet;
    double length = 1.0;  ///< stream length, > 0
    double afv = 1.0;     ///< additive function value, > 0
};

struct Site {
    int locID = 0;
    int rid = 0;
    double upDist = 0.0;  ///< hydrologic distance from the outlet
    double x = 0.0;
    double y = 0.0;
};

using SiteSet = std::vector<Site>;

/// Validated directed tree of stream segments.
///
/// Construction checks positivity of lengths and afv, rid uniqueness, dangling
/// to_rid references, cycles and the single-outlet rule, then builds the
/// path-to-outlet index. afv decreasing downstream is recorded as a warning.
class StreamNetwork {
public:
    explicit StreamNetwork(std::vector<SegmentRecord> segments);

    const std::vector<SegmentRecord>& segments() const { return segments_; }
    std::size_t size() const { return segments_.size(); }
    bool contains(int rid) const { return index_.count(rid) != 0; }
    const SegmentRecord& segment(int rid) const;
    int outlet() const { return outlet_; }

    /// Distance from the outlet to the downstream node of a segment.
    double node_distance(int rid) const;
    /// Segment rids from `rid` down to the outlet, inclusive.
    const std::vector<int>& path_to_outlet(int rid) const;
    /// Longest path-to-outlet, counted in segments.
    std::size_t depth() const;
    std::vector<int> children(int rid) const;

    const std::vector<std::string>& warnings() const { return warnings_; }

    /// Throws input-error when the site's rid is unknown or upDist lies outside its segment.
    void validate_site(const Site& site) const;

private:
    std::size_t position(int rid) const;

    std::vector<SegmentRecord> segments_;
    std::unordered_map<int, std::size_t> index_;
    std::vector<double> node_dist_;
    std::vector<std::vector<int>> paths_;
    std::vector<std::string> warnings_;
    int outlet_ = kOutlet;
};

/// Pairwise distance, connectivity and weight matrices between a row site set
/// and a column site set. For a square bundle (rows == cols), `D_col` equals
/// `D` transposed.
struct DistanceBundle {
    Matrix D;         ///< row site -> common junction (0 when the row site is downstream)
    Matrix D_col;     ///< column site -> common junction
    Matrix H;         ///< total hydrologic distance, D + D_col
    Matrix E;         ///< Euclidean distance
    Matrix flow_con;  ///< 1 when flow-connected
    Matrix W;         ///< tail-up weights, 0 when flow-unconnected
    bool same_sites = false;  ///< rows and columns are the same site list

    Eigen::Index rows() const { return H.rows(); }
    Eigen::Index cols() const { return H.cols(); }
};

/// Relationship between two sites on a network.
struct SitePair {
    bool flow_connected = false;
    double down_a = 0.0;  ///< distance from site a to the common junction
    double down_b = 0.0;  ///< distance from site b to the common junction
};

SitePair relate_sites(const StreamNetwork& net, const Site& a, const Site& b);

/// Tail-up weight sqrt(afv_min / afv_max) for flow-connected pairs, 0 otherwise.
double spatial_weight(const StreamNetwork& net, const Site& a, const Site& b);

DistanceBundle build_distance_bundle(const StreamNetwork& net, const SiteSet& rows, const SiteSet& cols);
inline DistanceBundle build_distance_bundle(const StreamNetwork& net, const SiteSet& sites) {
    return build_distance_bundle(net, sites, sites);
}

/// Largest total hydrologic distance among a site set.
double max_hydrologic_distance(const StreamNetwork& net, const SiteSet& sites);

struct NetworkGeneratorOptions {
    int n_segments = 150;
    std::uint64_t seed = 1;
    double obs_spacing = 3.0;
    double pred_spacing = 0.3;
};

struct GeneratedNetwork {
    StreamNetwork network;
    SiteSet obs;
    SiteSet preds;
};

/// Random binary-branching tree with systematic site placement. Observation
/// locIDs start at 1; prediction locIDs continue after the last observation.
GeneratedNetwork generate_network(const NetworkGeneratorOptions& options);

// CSV interface: network `rid,to_rid,length,afv` (-1 = outlet); sites `locID,rid,upDist,x,y`.
StreamNetwork read_network(std::istream& in, const std::string& source = "<network>");
StreamNetwork read_network_file(const std::string& path);
SiteSet read_sites(std::istream& in, const StreamNetwork& net, const std::string& source = "<sites>");
SiteSet read_sites_file(const std::string& path, const StreamNetwork& net);
void write_network(std::ostream& out, const StreamNetwork& net);
void write_sites(std::ostream& out, const SiteSet& sites);

}  // namespace streamst
