// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "pcmot/pathloss.hpp"

#include "pcmot/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace pcmot {

void LossConfig::validate() const {
    if (max_paths < 1) throw ConfigError("invalid loss config 'G': must be >= 1");
    if (max_skip < kUnlimitedSkip) throw ConfigError("invalid loss config 's_max': must be >= -1");
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw ConfigError("invalid loss config 'sigma': must be in (0, 1)");
    }
    if (min_span < 2) throw ConfigError("invalid loss config 'min_span': must be >= 2");
}

namespace {

PathSampling parse_sampling(const std::string& name) {
    if (name == "uniform") return PathSampling::uniform;
    if (name == "by_length") return PathSampling::by_length;
    throw ConfigError("invalid loss config 'path_sampling': '" + name + "' (expected uniform or by_length)");
}

}  // namespace

LossConfig LossConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, LossConfig{}); }

LossConfig LossConfig::from_config(const KeyValueConfig& kv, const LossConfig& d) {
    LossConfig c = d;
    c.max_paths = static_cast<int>(kv.get_int("G", d.max_paths));
    c.mask_size = static_cast<int>(kv.get_int("S", d.mask_size));
    c.max_skip = static_cast<int>(kv.get_int("s_max", d.max_skip));
    c.iou_threshold = kv.get_double("sigma", d.iou_threshold);
    c.min_span = static_cast<int>(kv.get_int("min_span", d.min_span));
    c.sampling = parse_sampling(
        kv.get_string("path_sampling", d.sampling == PathSampling::uniform ? "uniform" : "by_length"));
    c.check_identity = kv.get_bool("check_identity", d.check_identity);
    c.validate();
    return c;
}

void LossConfig::write_to(KeyValueConfig& kv) const {
    kv.set("G", std::to_string(max_paths));
    kv.set("S", std::to_string(mask_size));
    kv.set("s_max", std::to_string(max_skip));
    kv.set_number("sigma", iou_threshold);
    kv.set("min_span", std::to_string(min_span));
    kv.set("path_sampling", sampling == PathSampling::uniform ? "uniform" : "by_length");
    kv.set("check_identity", check_identity ? "true" : "false");
}

// --- frame pairs ---------------------------------------------------------------

std::vector<QuerySample> select_frame_pairs(const Clip& clip, double sigma, int min_span) {
    std::vector<QuerySample> samples;
    const std::size_t T = clip.length();
    std::vector<std::vector<char>> used(T);
    for (std::size_t pos = 0; pos < T; ++pos) used[pos].assign(clip[pos].real_count(), 0);

    for (std::size_t pos = 0; pos < T; ++pos) {
        for (std::size_t i = 0; i < clip[pos].real_count(); ++i) {
            if (used[pos][i]) continue;
            used[pos][i] = 1;
            QuerySample sample;
            sample.query = {clip[pos].frame(), static_cast<int>(i)};
            sample.chain.push_back(sample.query);
            Box current = *clip[pos][i].box;
            std::size_t p = pos;
            while (p + 1 < T) {
                const FrameObjects& next = clip[p + 1];
                int best = -1;
                double best_iou = -1.0;
                for (std::size_t j = 0; j < next.real_count(); ++j) {
                    if (used[p + 1][j]) continue;
                    const double v = iou(current, *next[j].box);
                    if (v > best_iou) {
                        best_iou = v;
                        best = static_cast<int>(j);
                    }
                }
                if (best < 0 || best_iou < sigma) break;
                ++p;
                used[p][static_cast<std::size_t>(best)] = 1;
                sample.chain.push_back({next.frame(), best});
                current = *next[static_cast<std::size_t>(best)].box;
            }
            const auto span = static_cast<int>(p - pos + 1);
            if (p > pos && span >= min_span) {
                sample.end_frame = clip[p].frame();
                samples.push_back(std::move(sample));
            }
        }
    }
    return samples;
}

// --- paths -----------------------------------------------------------------------

int Path::max_skip() const noexcept {
    int worst = 0;
    for (std::size_t k = 1; k < frames.size(); ++k) worst = std::max(worst, frames[k] - frames[k - 1] - 1);
    return worst;
}

namespace {

// completions[k][r]: admissible ways to decide intermediates k..K-1 given a
// trailing run of r skipped frames before position k.
std::vector<std::vector<double>> completion_counts(int K, int limit) {
    std::vector<std::vector<double>> c(static_cast<std::size_t>(K + 1),
                                       std::vector<double>(static_cast<std::size_t>(limit + 1), 0.0));
    for (int r = 0; r <= limit; ++r) c[static_cast<std::size_t>(K)][static_cast<std::size_t>(r)] = 1.0;
    for (int k = K - 1; k >= 0; --k) {
        for (int r = 0; r <= limit; ++r) {
            double ways = c[static_cast<std::size_t>(k + 1)][0];
            if (r + 1 <= limit) ways += c[static_cast<std::size_t>(k + 1)][static_cast<std::size_t>(r + 1)];
            c[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] = ways;
        }
    }
    return c;
}

// sized[k][r][m]: ways to decide positions k..K-1 with exactly m of them
// observed, given a current run of r skipped frames.
using SizedCounts = std::vector<std::vector<std::vector<double>>>;

SizedCounts sized_completion_counts(int K, int limit) {
    const auto n = static_cast<std::size_t>(K);
    SizedCounts c(n + 1, std::vector<std::vector<double>>(static_cast<std::size_t>(limit + 1),
                                                          std::vector<double>(n + 1, 0.0)));
    for (auto& run : c[n]) run[0] = 1.0;
    for (std::size_t k = n; k-- > 0;) {
        for (int r = 0; r <= limit; ++r) {
            auto& out = c[k][static_cast<std::size_t>(r)];
            for (std::size_t m = 0; m + k <= n; ++m) {
                double ways = m > 0 ? c[k + 1][0][m - 1] : 0.0;
                if (r + 1 <= limit) ways += c[k + 1][static_cast<std::size_t>(r + 1)][m];
                out[m] = ways;
            }
        }
    }
    return c;
}

int effective_limit(int K, int max_skip) { return max_skip < 0 ? K : std::min(max_skip, K); }

Path path_from_mask(int t_s, int t_e, const std::vector<bool>& keep) {
    Path path;
    path.frames.push_back(t_s);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        if (keep[k]) path.frames.push_back(t_s + 1 + static_cast<int>(k));
    }
    path.frames.push_back(t_e);
    return path;
}

void enumerate_paths(int K, int limit, std::size_t k, int run, std::vector<bool>& keep, int t_s,
                     int t_e, std::vector<Path>& out) {
    if (k == static_cast<std::size_t>(K)) {
        out.push_back(path_from_mask(t_s, t_e, keep));
        return;
    }
    keep[k] = true;
    enumerate_paths(K, limit, k + 1, 0, keep, t_s, t_e, out);
    if (run + 1 <= limit) {
        keep[k] = false;
        enumerate_paths(K, limit, k + 1, run + 1, keep, t_s, t_e, out);
    }
    keep[k] = true;
}

}  // namespace

double count_admissible_paths(int t_s, int t_e, int max_skip) {
    if (t_e - t_s < 1) throw ShapeError("path needs t_e > t_s");
    const int K = t_e - t_s - 1;
    if (max_skip < 0 || max_skip >= K) return std::ldexp(1.0, K);
    return completion_counts(K, max_skip)[0][0];
}

PathSet sample_paths(int t_s, int t_e, int max_paths, int max_skip, Rng& rng, PathSampling sampling) {
    if (t_e - t_s < 1) throw ShapeError("sample_paths needs t_e > t_s");
    if (max_paths < 1) throw ConfigError("sample_paths needs G >= 1");
    const int K = t_e - t_s - 1;
    const int limit = effective_limit(K, max_skip);
    PathSet set;
    set.admissible_count = count_admissible_paths(t_s, t_e, max_skip);

    std::vector<bool> keep(static_cast<std::size_t>(K), true);
    if (set.admissible_count <= static_cast<double>(max_paths)) {
        enumerate_paths(K, limit, 0, 0, keep, t_s, t_e, set.paths);
        return set;
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::set<std::vector<bool>> seen;
    seen.insert(keep);  // dense path
    set.paths.push_back(path_from_mask(t_s, t_e, keep));
    if (sampling == PathSampling::uniform) {
        const auto counts = completion_counts(K, limit);
        while (set.paths.size() < static_cast<std::size_t>(max_paths)) {
            int run = 0;
            for (int k = 0; k < K; ++k) {
                const double total = counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(run)];
                const double take = counts[static_cast<std::size_t>(k + 1)][0];
                const bool include = run + 1 > limit || unit(rng) * total < take;
                keep[static_cast<std::size_t>(k)] = include;
                run = include ? 0 : run + 1;
            }
            if (seen.insert(keep).second) set.paths.push_back(path_from_mask(t_s, t_e, keep));
        }
        return set;
    }

    const auto counts = sized_completion_counts(K, limit);
    std::vector<std::size_t> sizes;
    for (std::size_t m = 0; m <= static_cast<std::size_t>(K); ++m) {
        if (counts[0][0][m] > 0.0) sizes.push_back(m);
    }
    std::uniform_int_distribution<std::size_t> pick_size(0, sizes.size() - 1);
    while (set.paths.size() < static_cast<std::size_t>(max_paths)) {
        std::size_t m = sizes[pick_size(rng)];
        int run = 0;
        for (int k = 0; k < K; ++k) {
            const auto pos = static_cast<std::size_t>(k);
            const double total = counts[pos][static_cast<std::size_t>(run)][m];
            const double take = m > 0 ? counts[pos + 1][0][m - 1] : 0.0;
            const bool include = unit(rng) * total < take;
            keep[pos] = include;
            if (include) {
                --m;
                run = 0;
            } else {
                ++run;
            }
        }
        if (seen.insert(keep).second) set.paths.push_back(path_from_mask(t_s, t_e, keep));
    }
    return set;
}

// --- spatial mask ------------------------------------------------------------------

int resolve_mask_size(int requested, double mean_real_objects) {
    if (requested >= 0) return requested;
    return static_cast<int>(std::lround(std::sqrt(std::max(0.0, mean_real_objects))));
}

SpatialMask spatial_mask(const FrameObjects& src, const FrameObjects& dst, int S) {
    if (S < 0) throw ConfigError("spatial mask size S must be >= 0");
    SpatialMask mask;
    mask.src_frame = src.frame();
    mask.dst_frame = dst.frame();
    mask.allowed = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(src.size()),
                                         static_cast<Eigen::Index>(dst.size()));
    const std::size_t n_dst = dst.real_count();
    if (S == 0 || n_dst <= static_cast<std::size_t>(S)) return mask;
    std::vector<std::size_t> order(n_dst);
    std::vector<double> dist(n_dst);
    for (std::size_t i = 0; i < src.real_count(); ++i) {
        for (std::size_t j = 0; j < n_dst; ++j) dist[j] = center_distance(*src[i].box, *dst[j].box);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
        for (int s = 0; s < S; ++s) {
            mask.allowed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(order[static_cast<std::size_t>(s)])) = 0.0;
        }
    }
    return mask;
}

// --- propagation on values -------------------------------------------------------

AssocDistribution propagate(const AssocDistribution& q_prev, const MatchMatrix& P, const SpatialMask& C) {
    if (q_prev.q.size() != P.P.rows()) {
        throw ShapeError("propagate: distribution has " + std::to_string(q_prev.q.size()) +
                         " entries, match matrix has " + std::to_string(P.P.rows()) + " rows");
    }
    if (C.allowed.rows() != P.P.rows() || C.allowed.cols() != P.P.cols()) {
        throw ShapeError("propagate: mask shape differs from match matrix");
    }
    ad::Tape tape;
    const ad::Var q = tape.constant(q_prev.q);
    const ad::Var p = tape.constant(P.P);
    bool degenerate = false;
    const ad::Var next =
        tape.normalize_or_null(tape.masked_vecmat(q, p, C.allowed), P.P.cols() - 1, &degenerate);
    AssocDistribution out;
    out.query = q_prev.query;
    out.frame = P.dst_frame;
    out.q = tape.value(next);
    out.degenerate = q_prev.degenerate || degenerate;
    return out;
}

AssocDistribution path_distribution(const QueryRef& query, const Path& path,
                                    std::span<const MatchMatrix> hops, std::span<const SpatialMask> masks) {
    if (path.frames.size() < 2) throw ShapeError("path_distribution: path needs >= 2 frames");
    const std::size_t n_hops = path.frames.size() - 1;
    if (hops.size() != n_hops || masks.size() != n_hops) {
        throw ShapeError("path_distribution: expected " + std::to_string(n_hops) + " hops");
    }
    if (query.frame != path.frames.front()) {
        throw ShapeError("path_distribution: query frame differs from path start");
    }
    AssocDistribution q;
    q.query = query;
    q.frame = query.frame;
    q.q = Eigen::RowVectorXd::Zero(hops[0].P.rows());
    if (query.local_index < 0 || query.local_index >= hops[0].real_rows()) {
        throw ShapeError("path_distribution: query index is not a real object");
    }
    q.q[query.local_index] = 1.0;
    for (std::size_t k = 0; k < n_hops; ++k) {
        if (hops[k].src_frame != path.frames[k] || hops[k].dst_frame != path.frames[k + 1]) {
            throw ShapeError("path_distribution: hop " + std::to_string(k) + " does not follow the path");
        }
        q = propagate(q, hops[k], masks[k]);
    }
    return q;
}

// --- losses on values ----------------------------------------------------------------

double entropy(const Eigen::RowVectorXd& p) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
    }
    return h;
}

double kl_divergence(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
    if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
    double kl = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
    }
    return kl;
}

namespace {

Eigen::RowVectorXd mean_distribution(std::span<const Eigen::RowVectorXd> ds) {
    if (ds.empty()) throw ShapeError("pcl: no distributions");
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(ds[0].size());
    for (const auto& d : ds) {
        if (d.size() != mean.size()) throw ShapeError("pcl: distributions differ in length");
        mean += d;
    }
    return mean / static_cast<double>(ds.size());
}

}  // namespace

double pcl_unsimplified(std::span<const Eigen::RowVectorXd> distributions) {
    const Eigen::RowVectorXd mean = mean_distribution(distributions);
    double total = 0.0;
    for (const auto& d : distributions) total += kl_divergence(d, mean) + entropy(d);
    return total / static_cast<double>(distributions.size());
}

double pcl(std::span<const Eigen::RowVectorXd> distributions, bool check_identity) {
    const Eigen::RowVectorXd mean = mean_distribution(distributions);
    ad::Tape tape;
    const double value = tape.scalar(tape.entropy(tape.constant(mean)));
    if (check_identity) {
        const double slow = pcl_unsimplified(distributions);
        if (std::abs(slow - value) > 1e-9) {
            throw NumericalError("pcl: simplified and unsimplified forms disagree");
        }
    }
    return value;
}

double pcl(std::span<const AssocDistribution> distributions, bool check_identity) {
    std::vector<Eigen::RowVectorXd> rows;
    rows.reserve(distributions.size());
    for (const auto& d : distributions) rows.push_back(d.q);
    return pcl(std::span<const Eigen::RowVectorXd>(rows), check_identity);
}

double one_to_one_loss(std::span<const MatchMatrix> matrices) {
    ad::Tape tape;
    std::vector<ad::Var> terms;
    for (const auto& m : matrices) {
        if (m.real_cols() < 1) continue;
        terms.push_back(tape.column_floor_mean(tape.constant(m.P), m.real_rows(), m.real_cols()));
    }
    return terms.empty() ? 0.0 : tape.scalar(tape.mean_all(terms));
}

double bidirectional_loss(std::span<const DirectionalPair> pairs) {
    ad::Tape tape;
    std::vector<ad::Var> terms;
    for (const auto& pair : pairs) {
        const auto rows = pair.forward.real_rows();
        const auto cols = pair.forward.real_cols();
        if (pair.backward.real_rows() != cols || pair.backward.real_cols() != rows) {
            throw ShapeError("bidirectional_loss: backward matrix is not the reverse direction");
        }
        if (rows < 1 || cols < 1) continue;
        terms.push_back(tape.transpose_sq_diff_mean(tape.constant(pair.forward.P),
                                                    tape.constant(pair.backward.P), rows, cols));
    }
    return terms.empty() ? 0.0 : tape.scalar(tape.mean_all(terms));
}

// --- clip graph ----------------------------------------------------------------------

ClipGraph::ClipGraph(ad::Tape& tape, const BoundModel& model, const ModelParams& params, const Clip& clip)
    : tape_(&tape), clip_(&clip) {
    const std::size_t T = clip.length();
    std::vector<Detection> reals;
    real_rows_.resize(T);
    all_cols_.resize(T);
    for (std::size_t pos = 0; pos < T; ++pos) {
        for (const auto& det : clip[pos].reals()) {
            real_rows_[pos].push_back(static_cast<int>(reals.size()));
            reals.push_back(det);
        }
    }
    const int null_row = static_cast<int>(reals.size());
    for (std::size_t pos = 0; pos < T; ++pos) {
        all_cols_[pos] = real_rows_[pos];
        all_cols_[pos].push_back(null_row);
    }
    const ad::Var h_real = embed_rows(tape, model, input_features(params, reals));
    const ad::Var parts[] = {h_real, model.null_embedding};
    gram_ = tape.gram(tape.vstack(parts));
    cache_.assign(T * T, ad::Var{});
}

ad::Var ClipGraph::match(std::size_t src, std::size_t dst) {
    const std::size_t T = clip_->length();
    if (src >= T || dst >= T) throw ShapeError("ClipGraph::match: position outside the clip");
    ad::Var& slot = cache_[src * T + dst];
    if (!slot.valid()) slot = tape_->match_block(gram_, real_rows_[src], all_cols_[dst]);
    return slot;
}

MaskCache::MaskCache(const Clip& clip, int S) : clip_(&clip), S_(S) {
    cache_.resize(clip.length() * clip.length());
}

const Eigen::MatrixXd& MaskCache::get(std::size_t src, std::size_t dst) {
    auto& slot = cache_[src * clip_->length() + dst];
    if (!slot) slot = spatial_mask((*clip_)[src], (*clip_)[dst], S_).allowed;
    return *slot;
}

ad::Var path_consistency_term(ClipGraph& graph, MaskCache& masks, const QuerySample& sample,
                              const PathSet& paths, LossStats& stats, bool check_identity) {
    ad::Tape& tape = graph.tape();
    const Clip& clip = graph.clip();
    std::vector<ad::Var> finals;
    finals.reserve(paths.paths.size());
    for (const auto& path : paths.paths) {
        const std::size_t start = clip.position(path.frames.front());
        Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(clip[start].size()));
        onehot(0, sample.query.local_index) = 1.0;
        ad::Var q = tape.constant(std::move(onehot), "query");
        for (std::size_t k = 0; k + 1 < path.frames.size(); ++k) {
            const std::size_t a = clip.position(path.frames[k]);
            const std::size_t b = clip.position(path.frames[k + 1]);
            bool degenerate = false;
            q = tape.normalize_or_null(tape.masked_vecmat(q, graph.match(a, b), masks.get(a, b)),
                                       static_cast<Eigen::Index>(clip[b].null_index()), &degenerate);
            ++stats.propagated_rows;
            if (degenerate) ++stats.degenerate_rows;
        }
        finals.push_back(q);
    }
    if (check_identity) {
        std::vector<Eigen::RowVectorXd> rows;
        for (const auto v : finals) rows.push_back(tape.value(v));
        pcl(std::span<const Eigen::RowVectorXd>(rows), true);
    }
    return tape.entropy(tape.mean_rows(finals));
}

ad::Var one_to_one_term(ClipGraph& graph, std::size_t* pair_count) {
    ad::Tape& tape = graph.tape();
    const Clip& clip = graph.clip();
    std::vector<ad::Var> terms;
    for (std::size_t t = 0; t < clip.length(); ++t) {
        for (std::size_t r = 0; r < clip.length(); ++r) {
            if (t == r || clip[r].real_count() == 0) continue;
            terms.push_back(tape.column_floor_mean(graph.match(t, r),
                                                   static_cast<Eigen::Index>(clip[t].real_count()),
                                                   static_cast<Eigen::Index>(clip[r].real_count())));
        }
    }
    if (pair_count) *pair_count = terms.size();
    return terms.empty() ? tape.scalar_constant(0.0) : tape.mean_all(terms);
}

ad::Var bidirectional_term(ClipGraph& graph) {
    ad::Tape& tape = graph.tape();
    const Clip& clip = graph.clip();
    std::vector<ad::Var> terms;
    for (std::size_t t = 0; t < clip.length(); ++t) {
        for (std::size_t r = 0; r < clip.length(); ++r) {
            if (t == r || clip[t].real_count() == 0 || clip[r].real_count() == 0) continue;
            terms.push_back(tape.transpose_sq_diff_mean(graph.match(t, r), graph.match(r, t),
                                                        static_cast<Eigen::Index>(clip[t].real_count()),
                                                        static_cast<Eigen::Index>(clip[r].real_count())));
        }
    }
    return terms.empty() ? tape.scalar_constant(0.0) : tape.mean_all(terms);
}

LossEvaluation total_loss(const Clip& clip, const ModelParams& params, const LossConfig& config, Rng& rng) {
    config.validate();
    LossEvaluation ev;
    ad::Tape& tape = ev.tape.tape;
    ev.tape.model = bind(tape, params);
    ClipGraph graph(tape, ev.tape.model, params, clip);
    MaskCache masks(clip, resolve_mask_size(config.mask_size, clip.mean_real_count()));
    LossStats& stats = ev.stats;

    const auto samples = select_frame_pairs(clip, config.iou_threshold, config.min_span);
    std::vector<ad::Var> pcl_terms;
    double path_frames = 0.0, path_count = 0.0, skip_total = 0.0, skip_hops = 0.0;
    for (const auto& sample : samples) {
        const PathSet paths = sample_paths(sample.start_frame(), sample.end_frame, config.max_paths,
                                           config.max_skip, rng, config.sampling);
        pcl_terms.push_back(path_consistency_term(graph, masks, sample, paths, stats, config.check_identity));
        stats.paths_per_query.push_back(paths.paths.size());
        for (const auto& path : paths.paths) {
            path_frames += static_cast<double>(path.frames.size());
            path_count += 1.0;
            for (std::size_t k = 1; k < path.frames.size(); ++k) {
                const int gap = path.frames[k] - path.frames[k - 1] - 1;
                if (gap > 0) {
                    skip_total += gap;
                    skip_hops += 1.0;
                }
            }
        }
    }
    stats.query_count = samples.size();
    stats.skipped = samples.empty();
    stats.mean_path_length = path_count > 0 ? path_frames / path_count : 0.0;
    stats.mean_skip_length = skip_hops > 0 ? skip_total / skip_hops : 0.0;

    std::vector<ad::Var> parts;
    if (!pcl_terms.empty()) {
        const ad::Var l_pc = tape.mean_all(pcl_terms);
        stats.path_consistency = tape.scalar(l_pc);
        parts.push_back(l_pc);
    }
    const ad::Var l_om = one_to_one_term(graph, &stats.frame_pairs);
    const ad::Var l_bc = bidirectional_term(graph);
    stats.one_to_one = tape.scalar(l_om);
    stats.bidirectional = tape.scalar(l_bc);
    parts.push_back(l_om);
    parts.push_back(l_bc);
    ev.tape.loss = tape.add_all(parts);
    stats.total = tape.scalar(ev.tape.loss);
    return ev;
}

}  // namespace pcmot
