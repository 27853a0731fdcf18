#include "streamst/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "streamst/csv.hpp"
#include "streamst/error.hpp"
#include "streamst/random.hpp"

namespace streamst {

StreamNetwork::StreamNetwork(std::vector<SegmentRecord> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) throw input_error("network has no segments");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& s = segments_[i];
        const std::string tag = "segment " + std::to_string(s.rid);
        if (!(s.length > 0.0) || !std::isfinite(s.length)) throw input_error(tag + ": non-positive length");
        if (!(s.afv > 0.0) || !std::isfinite(s.afv)) throw input_error(tag + ": non-positive afv");
        if (s.rid == kOutlet) throw input_error(tag + ": rid collides with the outlet sentinel");
        if (!index_.emplace(s.rid, i).second) throw input_error(tag + ": duplicate rid");
    }
    for (const auto& s : segments_)
        if (s.to_rid != kOutlet && !contains(s.to_rid))
            throw input_error("segment " + std::to_string(s.rid) + ": unknown to_rid " + std::to_string(s.to_rid));

    // Walk each chain to the outlet; revisiting a segment within one walk is a cycle.
    std::vector<int> outlets;
    paths_.resize(segments_.size());
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        std::vector<int> path;
        std::set<int> seen;
        int rid = segments_[i].rid;
        while (rid != kOutlet) {
            if (!seen.insert(rid).second) throw input_error("cycle detected at segment " + std::to_string(rid));
            path.push_back(rid);
            rid = segments_[index_.at(rid)].to_rid;
        }
        paths_[i] = std::move(path);
        if (segments_[i].to_rid == kOutlet) outlets.push_back(segments_[i].rid);
    }
    if (outlets.size() != 1)
        throw input_error("multiple outlets: expected exactly one segment draining to the outlet, found " +
                          std::to_string(outlets.size()));
    outlet_ = outlets.front();

    node_dist_.assign(segments_.size(), 0.0);
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        double dist = 0.0;
        const auto& path = paths_[i];
        for (std::size_t k = 1; k < path.size(); ++k) dist += segment(path[k]).length;
        node_dist_[i] = dist;
    }

    for (const auto& s : segments_) {
        if (s.to_rid == kOutlet) continue;
        const auto& down = segment(s.to_rid);
        if (down.afv < s.afv)
            warnings_.push_back("afv decreases downstream from segment " + std::to_string(s.rid) + " to " +
                                std::to_string(down.rid));
    }
}

std::size_t StreamNetwork::position(int rid) const {
    auto it = index_.find(rid);
    if (it == index_.end()) throw input_error("site not on network: unknown rid " + std::to_string(rid));
    return it->second;
}

const SegmentRecord& StreamNetwork::segment(int rid) const { return segments_[position(rid)]; }

double StreamNetwork::node_distance(int rid) const { return node_dist_[position(rid)]; }

const std::vector<int>& StreamNetwork::path_to_outlet(int rid) const { return paths_[position(rid)]; }

std::size_t StreamNetwork::depth() const {
    std::size_t d = 0;
    for (const auto& p : paths_) d = std::max(d, p.size());
    return d;
}

std::vector<int> StreamNetwork::children(int rid) const {
    std::vector<int> out;
    for (const auto& s : segments_)
        if (s.to_rid == rid) out.push_back(s.rid);
    return out;
}

void StreamNetwork::validate_site(const Site& site) const {
    const std::string tag = "site " + std::to_string(site.locID);
    if (!contains(site.rid)) throw input_error(tag + ": site not on network, unknown rid " + std::to_string(site.rid));
    const double lo = node_distance(site.rid);
    const double hi = lo + segment(site.rid).length;
    const double tol = 1e-9 * std::max(1.0, hi);
    if (!std::isfinite(site.upDist) || site.upDist < lo - tol || site.upDist > hi + tol)
        throw input_error(tag + ": upDist outside its segment's span");
}

SitePair relate_sites(const StreamNetwork& net, const Site& a, const Site& b) {
    SitePair pair;
    const auto& path_a = net.path_to_outlet(a.rid);
    const auto& path_b = net.path_to_outlet(b.rid);
    const bool b_below_a = a.rid == b.rid ? a.upDist >= b.upDist
                                          : std::find(path_a.begin(), path_a.end(), b.rid) != path_a.end();
    const bool a_below_b = a.rid == b.rid ? b.upDist >= a.upDist
                                          : std::find(path_b.begin(), path_b.end(), a.rid) != path_b.end();
    if (b_below_a) {
        pair.flow_connected = true;
        pair.down_a = std::max(0.0, a.upDist - b.upDist);
        return pair;
    }
    if (a_below_b) {
        pair.flow_connected = true;
        pair.down_b = std::max(0.0, b.upDist - a.upDist);
        return pair;
    }
    // Deepest common segment: walk both paths from the outlet end.
    auto ia = path_a.rbegin();
    auto ib = path_b.rbegin();
    int common = *ia;
    while (ia != path_a.rend() && ib != path_b.rend() && *ia == *ib) {
        common = *ia;
        ++ia;
        ++ib;
    }
    const double junction = net.node_distance(common) + net.segment(common).length;
    pair.down_a = std::max(0.0, a.upDist - junction);
    pair.down_b = std::max(0.0, b.upDist - junction);
    // A site sitting exactly on the confluence receives flow from both branches.
    pair.flow_connected = pair.down_a == 0.0 || pair.down_b == 0.0;
    return pair;
}

double spatial_weight(const StreamNetwork& net, const Site& a, const Site& b) {
    const auto pair = relate_sites(net, a, b);
    if (!pair.flow_connected) return 0.0;
    if (a.rid == b.rid) return 1.0;
    const double fa = net.segment(a.rid).afv;
    const double fb = net.segment(b.rid).afv;
    return std::sqrt(std::min(fa, fb) / std::max(fa, fb));
}

DistanceBundle build_distance_bundle(const StreamNetwork& net, const SiteSet& rows, const SiteSet& cols) {
    for (const auto& s : rows) net.validate_site(s);
    for (const auto& s : cols) net.validate_site(s);
    const auto nr = static_cast<Eigen::Index>(rows.size());
    const auto nc = static_cast<Eigen::Index>(cols.size());
    DistanceBundle b;
    b.D = Matrix::Zero(nr, nc);
    b.D_col = Matrix::Zero(nr, nc);
    b.E = Matrix::Zero(nr, nc);
    b.flow_con = Matrix::Zero(nr, nc);
    b.W = Matrix::Zero(nr, nc);
    for (Eigen::Index i = 0; i < nr; ++i) {
        const Site& si = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < nc; ++j) {
            const Site& sj = cols[static_cast<std::size_t>(j)];
            const auto pair = relate_sites(net, si, sj);
            b.D(i, j) = pair.down_a;
            b.D_col(i, j) = pair.down_b;
            b.E(i, j) = std::hypot(si.x - sj.x, si.y - sj.y);
            b.flow_con(i, j) = pair.flow_connected ? 1.0 : 0.0;
            b.W(i, j) = spatial_weight(net, si, sj);
        }
    }
    b.H = b.D + b.D_col;
    b.same_sites = rows.size() == cols.size() &&
                   std::equal(rows.begin(), rows.end(), cols.begin(),
                              [](const Site& l, const Site& r) { return l.locID == r.locID; });
    return b;
}

double max_hydrologic_distance(const StreamNetwork& net, const SiteSet& sites) {
    double best = 0.0;
    for (std::size_t i = 0; i < sites.size(); ++i)
        for (std::size_t j = i + 1; j < sites.size(); ++j) {
            const auto p = relate_sites(net, sites[i], sites[j]);
            best = std::max(best, p.down_a + p.down_b);
        }
    return best;
}

GeneratedNetwork generate_network(const NetworkGeneratorOptions& options) {
    if (options.n_segments < 1) throw config_error("n_segments must be >= 1");
    if (!(options.obs_spacing > 0.0) || !(options.pred_spacing > 0.0))
        throw config_error("site spacings must be positive");

    Rng rng = make_rng(options.seed, Stream::Network);
    std::uniform_real_distribution<double> length_dist(0.5, 1.5);
    std::uniform_real_distribution<double> weight_dist(0.5, 1.5);
    std::uniform_real_distribution<double> spread(0.2, 0.8);
    std::uniform_real_distribution<double> wobble(-0.2, 0.2);

    const auto n = static_cast<std::size_t>(options.n_segments);
    std::vector<SegmentRecord> segs;
    segs.reserve(n);
    std::vector<double> angle;
    std::vector<std::size_t> leaves;
    segs.push_back({1, kOutlet, length_dist(rng), 0.0});
    angle.push_back(std::numbers::pi / 2);
    leaves.push_back(0);

    while (segs.size() < n) {
        std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
        const std::size_t slot = pick(rng);
        const std::size_t parent = leaves[slot];
        leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(slot));
        const int parent_rid = segs[parent].rid;
        if (n - segs.size() >= 2) {
            const double left = angle[parent] + spread(rng);
            const double right = angle[parent] - spread(rng);
            for (double a : {left, right}) {
                segs.push_back({static_cast<int>(segs.size()) + 1, parent_rid, length_dist(rng), 0.0});
                angle.push_back(a);
                leaves.push_back(segs.size() - 1);
            }
        } else {
            segs.push_back({static_cast<int>(segs.size()) + 1, parent_rid, length_dist(rng), 0.0});
            angle.push_back(angle[parent] + wobble(rng));
            leaves.push_back(segs.size() - 1);
        }
    }

    // Headwater contributions accumulate downstream; children always follow their parent.
    std::vector<double> afv(n, 0.0);
    std::sort(leaves.begin(), leaves.end());
    for (std::size_t leaf : leaves) afv[leaf] = weight_dist(rng);
    for (std::size_t i = n; i-- > 1;) afv[static_cast<std::size_t>(segs[i].to_rid - 1)] += afv[i];
    for (std::size_t i = 0; i < n; ++i) segs[i].afv = afv[i] / afv[0];

    // Downstream node coordinates, laid out from the outlet at the origin.
    std::vector<double> x0(n, 0.0), y0(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        const auto p = static_cast<std::size_t>(segs[i].to_rid - 1);
        x0[i] = x0[p] + segs[p].length * std::cos(angle[p]);
        y0[i] = y0[p] + segs[p].length * std::sin(angle[p]);
    }

    GeneratedNetwork out{StreamNetwork(segs), {}, {}};
    auto place = [&](double spacing, SiteSet& sites) {
        for (std::size_t i = 0; i < n; ++i) {
            const double lo = out.network.node_distance(segs[i].rid);
            const double hi = lo + segs[i].length;
            for (auto k = static_cast<long>(std::floor(lo / spacing - 0.5)); ; ++k) {
                const double pos = spacing * (static_cast<double>(k) + 0.5);
                if (pos > hi) break;
                if (pos <= lo) continue;
                const double f = (pos - lo) / segs[i].length;
                sites.push_back({0, segs[i].rid, pos, x0[i] + f * segs[i].length * std::cos(angle[i]),
                                 y0[i] + f * segs[i].length * std::sin(angle[i])});
            }
        }
    };
    place(options.obs_spacing, out.obs);
    place(options.pred_spacing, out.preds);
    int next_id = 1;
    for (auto& s : out.obs) s.locID = next_id++;
    for (auto& s : out.preds) s.locID = next_id++;
    return out;
}

StreamNetwork read_network(std::istream& in, const std::string& source) {
    const auto table = csv::read(in, source);
    const auto c_rid = table.column("rid"), c_to = table.column("to_rid"), c_len = table.column("length"),
               c_afv = table.column("afv");
    std::vector<SegmentRecord> segs;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + " row " + std::to_string(r + 1);
        segs.push_back({csv::to_int(row[c_rid], ctx), csv::to_int(row[c_to], ctx), csv::to_double(row[c_len], ctx),
                        csv::to_double(row[c_afv], ctx)});
    }
    return StreamNetwork(std::move(segs));
}

StreamNetwork read_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return read_network(in, path);
}

SiteSet read_sites(std::istream& in, const StreamNetwork& net, const std::string& source) {
    const auto table = csv::read(in, source);
    const auto c_id = table.column("locID"), c_rid = table.column("rid"), c_up = table.column("upDist"),
               c_x = table.column("x"), c_y = table.column("y");
    SiteSet sites;
    std::set<int> ids;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + " row " + std::to_string(r + 1);
        Site s{csv::to_int(row[c_id], ctx), csv::to_int(row[c_rid], ctx), csv::to_double(row[c_up], ctx),
               csv::to_double(row[c_x], ctx), csv::to_double(row[c_y], ctx)};
        if (!ids.insert(s.locID).second) throw input_error(ctx + ": duplicate locID " + std::to_string(s.locID));
        net.validate_site(s);
        sites.push_back(s);
    }
    return sites;
}

SiteSet read_sites_file(const std::string& path, const StreamNetwork& net) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return read_sites(in, net, path);
}

void write_network(std::ostream& out, const StreamNetwork& net) {
    csv::write_row(out, {"rid", "to_rid", "length", "afv"});
    for (const auto& s : net.segments())
        csv::write_row(out, {std::to_string(s.rid), std::to_string(s.to_rid), csv::format(s.length), csv::format(s.afv)});
}

void write_sites(std::ostream& out, const SiteSet& sites) {
    csv::write_row(out, {"locID", "rid", "upDist", "x", "y"});
    for (const auto& s : sites)
        csv::write_row(out, {std::to_string(s.locID), std::to_string(s.rid), csv::format(s.upDist), csv::format(s.x),
                             csv::format(s.y)});
}

}  // namespace streamst
