#pragma once

// Self-organizing incremental network used as semantic memory: a growing
// graph of prototype nodes over encoder representations. Nodes track how
// often they won as best-matching unit per class; those counts drive the
// class-conditional retrieval used to gate the classifier.
//
// Mechanics: two-winner matching with similarity thresholds (a node's
// threshold is the max distance to its graph neighbors, or the distance to
// its nearest node when edgeless), winner adaptation with step 1/win_count,
// neighbor pull scaled down by the pull factor, edge aging, and periodic
// deletion of edgeless low-trust idle nodes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drill/common.hpp"

namespace drill {

struct SoinnConfig {
    std::size_t dim = 0;
    double pull_factor = 50.0;        // eta: divisor on the neighbor step
    int max_edge_age = 50;
    std::int64_t deletion_period = 200;  // lambda: signals between deletion sweeps
    double trust_percentile = 25.0;   // win_count below this -> low trust
    double idle_percentile = 75.0;    // idle_time above this -> idle
};

struct SoinnNode {
    int id = 0;  // creation index, stable across deletions
    std::vector<double> w;
    std::int64_t win_count = 0;
    std::map<int, std::int64_t> class_wins;
    std::int64_t idle_time = 0;   // signals since last BMU win
    std::int64_t created_at = 0;  // signal index at creation
};

class SoinnNetwork {
public:
    explicit SoinnNetwork(SoinnConfig cfg) : cfg_(cfg) {
        if (cfg_.dim == 0) throw std::invalid_argument("soinn: dim must be > 0");
        if (cfg_.pull_factor <= 0.0) throw std::invalid_argument("soinn: pull factor must be > 0");
    }

    const SoinnConfig& config() const { return cfg_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    std::int64_t signals_observed() const { return signal_count_; }
    const std::vector<SoinnNode>& nodes() const { return nodes_; }
    const std::map<std::pair<int, int>, int>& edges() const { return edges_; }
    bool empty() const { return nodes_.empty(); }

    struct BmuResult {
        int winner_id = -1, runner_id = -1;
        double d1 = 0.0, d2 = 0.0;
    };

    // Two nearest nodes by Euclidean distance; ties go to the lower
    // creation index. Requires >= 2 nodes.
    std::optional<BmuResult> find_bmus(std::span<const double> signal) const {
        check_signal(signal);
        if (nodes_.size() < 2) return std::nullopt;
        BmuResult r;
        double best1 = std::numeric_limits<double>::infinity();
        double best2 = std::numeric_limits<double>::infinity();
        for (const auto& n : nodes_) {  // nodes_ is in creation order
            double d = distance(n.w, signal);
            if (d < best1) {
                best2 = best1;
                r.runner_id = r.winner_id;
                best1 = d;
                r.winner_id = n.id;
            } else if (d < best2) {
                best2 = d;
                r.runner_id = n.id;
            }
        }
        r.d1 = best1;
        r.d2 = best2;
        return r;
    }

    // One labeled observation. See the file comment for the step order.
    void learn(std::span<const double> signal, int label) {
        check_signal(signal);
        for (double v : signal)
            if (!std::isfinite(v)) throw std::invalid_argument("soinn: non-finite signal");
        ++signal_count_;

        if (nodes_.size() < 2) {
            insert_node(signal);
            age_idle_except(nodes_.back().id);
        } else {
            BmuResult bmu = *find_bmus(signal);
            double t1 = similarity_threshold(bmu.winner_id);
            double t2 = similarity_threshold(bmu.runner_id);
            if (bmu.d1 > t1 || bmu.d2 > t2) {
                // novel input: new node, credited as its own first winner
                SoinnNode& fresh = insert_node(signal);
                fresh.win_count = 1;
                fresh.class_wins[label] = 1;
                age_idle_except(fresh.id);
            } else {
                refresh_edge(bmu.winner_id, bmu.runner_id);
                age_edges_of(bmu.winner_id, bmu.runner_id);

                SoinnNode& winner = node_ref(bmu.winner_id);
                double step = 1.0 / static_cast<double>(std::max<std::int64_t>(winner.win_count, 1));
                for (std::size_t i = 0; i < cfg_.dim; ++i)
                    winner.w[i] += step * (signal[i] - winner.w[i]);
                for (int nb : neighbor_ids(bmu.winner_id)) {
                    SoinnNode& nn = node_ref(nb);
                    double nstep = 1.0 / (cfg_.pull_factor *
                                          static_cast<double>(std::max<std::int64_t>(nn.win_count, 1)));
                    for (std::size_t i = 0; i < cfg_.dim; ++i)
                        nn.w[i] += nstep * (signal[i] - nn.w[i]);
                }
                ++winner.win_count;
                ++winner.class_wins[label];
                winner.idle_time = 0;
                age_idle_except(winner.id);
            }
        }

        if (cfg_.deletion_period > 0 && signal_count_ % cfg_.deletion_period == 0) delete_nodes();
    }

    // Removes nodes that are simultaneously edgeless, below the trust
    // percentile of win counts and above the idle percentile of idle times.
    // Current top-2 class representatives are exempt; never drops below 2
    // nodes. Returns how many were removed.
    std::size_t delete_nodes() {
        if (nodes_.size() <= 2) return 0;

        std::set<int> exempt;
        for (int label : labels_seen()) {
            Top2 t = top2_for_class(label);
            if (t.first) exempt.insert(t.first->id);
            if (t.second) exempt.insert(t.second->id);
        }

        std::vector<double> wins, idles;
        wins.reserve(nodes_.size());
        idles.reserve(nodes_.size());
        for (const auto& n : nodes_) {
            wins.push_back(static_cast<double>(n.win_count));
            idles.push_back(static_cast<double>(n.idle_time));
        }
        double trust_cut = percentile(wins, cfg_.trust_percentile);
        double idle_cut = percentile(idles, cfg_.idle_percentile);

        std::set<int> doomed;
        for (const auto& n : nodes_) {
            if (nodes_.size() - doomed.size() <= 2) break;
            if (exempt.count(n.id)) continue;
            if (degree(n.id) > 0) continue;                                  // non-usage
            if (!(static_cast<double>(n.win_count) < trust_cut)) continue;   // trustworthiness
            if (!(static_cast<double>(n.idle_time) > idle_cut)) continue;    // idle time
            doomed.insert(n.id);
        }
        if (doomed.empty()) return 0;
        std::erase_if(nodes_, [&](const SoinnNode& n) { return doomed.count(n.id) > 0; });
        std::erase_if(edges_, [&](const auto& e) {
            return doomed.count(e.first.first) > 0 || doomed.count(e.first.second) > 0;
        });
        return doomed.size();
    }

    struct Top2 {
        const SoinnNode* first = nullptr;
        const SoinnNode* second = nullptr;
    };

    // The two nodes that most often won as BMU for this class; ties by
    // higher total win count, then lower creation index. Missing slots stay
    // null and the caller substitutes its neutral gate signal.
    Top2 top2_for_class(int label) const {
        const SoinnNode* best = nullptr;
        const SoinnNode* second = nullptr;
        auto wins_for = [&](const SoinnNode& n) -> std::int64_t {
            auto it = n.class_wins.find(label);
            return it == n.class_wins.end() ? 0 : it->second;
        };
        auto better = [&](const SoinnNode& a, const SoinnNode& b) {
            std::int64_t wa = wins_for(a), wb = wins_for(b);
            if (wa != wb) return wa > wb;
            if (a.win_count != b.win_count) return a.win_count > b.win_count;
            return a.id < b.id;
        };
        for (const auto& n : nodes_) {
            if (wins_for(n) <= 0) continue;
            if (!best || better(n, *best)) {
                second = best;
                best = &n;
            } else if (!second || better(n, *second)) {
                second = &n;
            }
        }
        return Top2{best, second};
    }

    // Label-free BMU lookup used at evaluation time; null when empty.
    const SoinnNode* winner_for(std::span<const double> signal) const {
        check_signal(signal);
        if (nodes_.empty()) return nullptr;
        const SoinnNode* best = &nodes_.front();
        double bd = distance(best->w, signal);
        for (const auto& n : nodes_) {
            double d = distance(n.w, signal);
            if (d < bd) {
                bd = d;
                best = &n;
            }
        }
        return best;
    }

    std::uint64_t checksum() const {
        Checksum cs;
        cs.add(signal_count_);
        cs.add(nodes_.size());
        for (const auto& n : nodes_) {
            cs.add(n.id);
            cs.add(n.w);
            cs.add(n.win_count);
            cs.add(n.idle_time);
            cs.add(n.created_at);
            cs.add(n.class_wins.size());
            for (auto [c, k] : n.class_wins) {
                cs.add(c);
                cs.add(k);
            }
        }
        cs.add(edges_.size());
        for (auto& [e, age] : edges_) {
            cs.add(e.first);
            cs.add(e.second);
            cs.add(age);
        }
        return cs.value();
    }

    // --- text dump -------------------------------------------------------

    void dump(std::ostream& out) const {
        out << "soinn v1 dim " << cfg_.dim << " eta " << format_double(cfg_.pull_factor)
            << " maxage " << cfg_.max_edge_age << " period " << cfg_.deletion_period
            << " signals " << signal_count_ << " nextid " << next_id_ << "\n";
        for (const auto& n : nodes_) {
            out << "node " << n.id << ' ' << n.created_at << ' ' << n.win_count << ' '
                << n.idle_time << " w";
            for (double x : n.w) out << ' ' << format_double(x);
            out << " wins";
            for (auto [c, k] : n.class_wins) out << ' ' << c << ':' << k;
            out << '\n';
        }
        for (auto& [e, age] : edges_) out << "edge " << e.first << ' ' << e.second << ' ' << age << '\n';
    }

    static SoinnNetwork parse(std::istream& in) {
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("soinn dump: empty input");
        std::istringstream hdr(line);
        std::string tag, ver, kw;
        SoinnConfig cfg;
        std::int64_t signals = 0;
        int next_id = 0;
        hdr >> tag >> ver;
        if (tag != "soinn" || ver != "v1") throw std::runtime_error("soinn dump: bad header");
        while (hdr >> kw) {
            if (kw == "dim") hdr >> cfg.dim;
            else if (kw == "eta") hdr >> cfg.pull_factor;
            else if (kw == "maxage") hdr >> cfg.max_edge_age;
            else if (kw == "period") hdr >> cfg.deletion_period;
            else if (kw == "signals") hdr >> signals;
            else if (kw == "nextid") hdr >> next_id;
            else throw std::runtime_error("soinn dump: unknown header field '" + kw + "'");
        }
        SoinnNetwork net(cfg);
        net.signal_count_ = signals;
        net.next_id_ = next_id;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string what;
            ls >> what;
            if (what == "node") {
                SoinnNode n;
                ls >> n.id >> n.created_at >> n.win_count >> n.idle_time;
                std::string section;
                ls >> section;
                if (section != "w") throw std::runtime_error("soinn dump: bad node line");
                n.w.resize(cfg.dim);
                for (auto& x : n.w)
                    if (!(ls >> x)) throw std::runtime_error("soinn dump: short weight vector");
                ls >> section;
                if (section != "wins") throw std::runtime_error("soinn dump: bad node line");
                std::string pair;
                while (ls >> pair) {
                    auto colon = pair.find(':');
                    if (colon == std::string::npos)
                        throw std::runtime_error("soinn dump: bad class-wins pair");
                    n.class_wins[std::stoi(pair.substr(0, colon))] =
                        std::stoll(pair.substr(colon + 1));
                }
                net.nodes_.push_back(std::move(n));
            } else if (what == "edge") {
                int a = 0, b = 0, age = 0;
                ls >> a >> b >> age;
                net.edges_[{std::min(a, b), std::max(a, b)}] = age;
            } else {
                throw std::runtime_error("soinn dump: unknown record '" + what + "'");
            }
        }
        return net;
    }

private:
    SoinnConfig cfg_;
    std::vector<SoinnNode> nodes_;                // kept in creation (id) order
    std::map<std::pair<int, int>, int> edges_;   // (low id, high id) -> age
    std::int64_t signal_count_ = 0;
    int next_id_ = 0;

    void check_signal(std::span<const double> signal) const {
        if (signal.size() != cfg_.dim)
            throw std::invalid_argument("soinn: signal dimension mismatch");
    }

    static double distance(const std::vector<double>& w, std::span<const double> s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            double d = w[i] - s[i];
            acc += d * d;
        }
        return std::sqrt(acc);
    }

    SoinnNode& node_ref(int id) {
        for (auto& n : nodes_)
            if (n.id == id) return n;
        throw std::logic_error("soinn: dangling node id");
    }

    SoinnNode& insert_node(std::span<const double> signal) {
        SoinnNode n;
        n.id = next_id_++;
        n.w.assign(signal.begin(), signal.end());
        n.created_at = signal_count_;
        nodes_.push_back(std::move(n));
        return nodes_.back();
    }

    void age_idle_except(int id) {
        for (auto& n : nodes_)
            if (n.id != id) ++n.idle_time;
    }

    std::vector<int> neighbor_ids(int id) const {
        std::vector<int> out;
        for (auto& [e, age] : edges_) {
            if (e.first == id) out.push_back(e.second);
            else if (e.second == id) out.push_back(e.first);
        }
        return out;
    }

    std::size_t degree(int id) const {
        std::size_t d = 0;
        for (auto& [e, age] : edges_)
            if (e.first == id || e.second == id) ++d;
        return d;
    }

    void refresh_edge(int a, int b) {
        edges_[{std::min(a, b), std::max(a, b)}] = 0;
    }

    // ages the winner's other edges, then prunes those past max_edge_age
    void age_edges_of(int winner, int runner) {
        std::pair<int, int> fresh{std::min(winner, runner), std::max(winner, runner)};
        for (auto& [e, age] : edges_)
            if (e != fresh && (e.first == winner || e.second == winner)) ++age;
        std::erase_if(edges_, [&](const auto& e) { return e.second > cfg_.max_edge_age; });
    }

    // max distance to graph neighbors; nearest other node when edgeless
    double similarity_threshold(int id) const {
        const SoinnNode* n = nullptr;
        for (const auto& c : nodes_)
            if (c.id == id) n = &c;
        std::vector<int> nbs = neighbor_ids(id);
        if (!nbs.empty()) {
            double mx = 0.0;
            for (int nb : nbs)
                for (const auto& c : nodes_)
                    if (c.id == nb) mx = std::max(mx, distance(n->w, std::span(c.w)));
            return mx;
        }
        double mn = std::numeric_limits<double>::infinity();
        for (const auto& c : nodes_)
            if (c.id != id) mn = std::min(mn, distance(n->w, std::span(c.w)));
        return mn;
    }

    std::set<int> labels_seen() const {
        std::set<int> out;
        for (const auto& n : nodes_)
            for (auto [c, k] : n.class_wins)
                if (k > 0) out.insert(c);
        return out;
    }

    // linear-interpolation percentile over a copy of the values
    static double percentile(std::vector<double> vals, double p) {
        std::sort(vals.begin(), vals.end());
        if (vals.size() == 1) return vals[0];
        double rank = p / 100.0 * static_cast<double>(vals.size() - 1);
        std::size_t lo = static_cast<std::size_t>(rank);
        std::size_t hi = std::min(lo + 1, vals.size() - 1);
        double frac = rank - static_cast<double>(lo);
        return vals[lo] + frac * (vals[hi] - vals[lo]);
    }
};

}  // namespace drill
