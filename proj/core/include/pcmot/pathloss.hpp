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

#pragma once

#include "pcmot/autodiff.hpp"
#include "pcmot/kv_config.hpp"
#include "pcmot/model.hpp"
#include "pcmot/random.hpp"
#include "pcmot/types.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace pcmot {

struct QueryRef {
    int frame = 0;
    int local_index = 0;
    bool operator==(const QueryRef&) const = default;
};

// A query object at its start frame and the end frame of its IoU chain.
struct QuerySample {
    QueryRef query;
    int end_frame = 0;
    std::vector<QueryRef> chain;

    int start_frame() const noexcept { return query.frame; }
};

// Observed frames from start to end, strictly increasing.
struct Path {
    std::vector<int> frames;

    // Longest run of consecutive skipped frames.
    int max_skip() const noexcept;
    bool operator==(const Path&) const = default;
};

struct PathSet {
    std::vector<Path> paths;
    // Number of admissible paths under the skip limit (may exceed paths.size()).
    double admissible_count = 0.0;
};

// Binary matrix over (source objects) x (destination objects); 1 = allowed.
struct SpatialMask {
    int src_frame = 0;
    int dst_frame = 0;
    Eigen::MatrixXd allowed;
};

struct AssocDistribution {
    QueryRef query;
    int frame = 0;
    Eigen::RowVectorXd q;
    bool degenerate = false;
};

inline constexpr int kUnlimitedSkip = -1;

// How the non-dense paths are drawn. uniform: uniform over all admissible
// paths. by_length: the number of observed intermediate frames is uniform over
// its feasible values, then the path is uniform among admissible paths of
// that length, which favors long skips.
enum class PathSampling { uniform, by_length };

struct LossConfig {
    int max_paths = 25;        // G
    int mask_size = -1;        // S; negative means round(sqrt(mean real objects per frame))
    int max_skip = kUnlimitedSkip;  // s_max
    double iou_threshold = 0.5;     // sigma
    int min_span = 8;
    PathSampling sampling = PathSampling::uniform;
    bool check_identity = false;    // evaluate the unsimplified PCL too and compare

    void validate() const;
    static LossConfig from_config(const KeyValueConfig& kv);
    static LossConfig from_config(const KeyValueConfig& kv, const LossConfig& defaults);
    void write_to(KeyValueConfig& kv) const;
};

// --- frame-pair and path selection ----------------------------------------

// Greedy IoU chaining: each unused real object, in temporal order, starts a
// chain that repeatedly moves to the unused object of the next frame with the
// highest IoU, while that IoU is >= sigma. Chain members become used. Chains
// covering at least min_span frames yield a QuerySample.
std::vector<QuerySample> select_frame_pairs(const Clip& clip, double sigma, int min_span);

// Number of paths from t_s to t_e whose longest skipped run is <= max_skip.
double count_admissible_paths(int t_s, int t_e, int max_skip);

// All admissible paths when there are at most max_paths of them; otherwise
// the dense path plus max_paths - 1 distinct paths drawn from the remaining
// admissible ones.
PathSet sample_paths(int t_s, int t_e, int max_paths, int max_skip, Rng& rng,
                     PathSampling sampling = PathSampling::uniform);

// --- spatial constraint ---------------------------------------------------

int resolve_mask_size(int requested, double mean_real_objects);

// Masks, per real source object, the S real destinations with the largest
// box-center distance. Null column (and the null source row) stay allowed.
// Nothing real is masked when the destination has <= S real objects.
SpatialMask spatial_mask(const FrameObjects& src, const FrameObjects& dst, int S);

// --- association propagation ----------------------------------------------

// q_next[j] ∝ sum_u q_prev[u] C[u,j] P[u,j], renormalized; all mass goes to
// null (degenerate = true) when nothing survives the mask.
AssocDistribution propagate(const AssocDistribution& q_prev, const MatchMatrix& P,
                            const SpatialMask& C);

// Folds propagate() along consecutive hops, starting from a one-hot on the
// query. hops[k] and masks[k] connect path.frames[k] -> path.frames[k + 1].
AssocDistribution path_distribution(const QueryRef& query, const Path& path,
                                    std::span<const MatchMatrix> hops,
                                    std::span<const SpatialMask> masks);

// --- losses on plain values -----------------------------------------------

double entropy(const Eigen::RowVectorXd& p);
double kl_divergence(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q);

// Entropy of the mean distribution. Throws ShapeError on length mismatch or
// an empty list. With check_identity the unsimplified form is evaluated too
// and a disagreement above 1e-9 throws NumericalError.
double pcl(std::span<const AssocDistribution> distributions, bool check_identity = false);
double pcl(std::span<const Eigen::RowVectorXd> distributions, bool check_identity = false);
// (1/n) sum_i [KL(q_i || mean) + H(q_i)]
double pcl_unsimplified(std::span<const Eigen::RowVectorXd> distributions);

// Mean over matrices of (1/real cols) sum_j max(1, real column sum); matrices
// without real destinations are skipped, and an empty set gives 0.
double one_to_one_loss(std::span<const MatchMatrix> matrices);

struct DirectionalPair {
    MatchMatrix forward;   // t -> r
    MatchMatrix backward;  // r -> t
};

// Mean over pairs of the mean real-block (forward[i,j] - backward[j,i])^2.
double bidirectional_loss(std::span<const DirectionalPair> pairs);

// --- differentiable clip objective ----------------------------------------

// All embeddings of a clip plus one shared null row, with match matrices for
// any ordered frame pair built on demand from a single Gram matrix.
class ClipGraph {
public:
    ClipGraph(ad::Tape& tape, const BoundModel& model, const ModelParams& params,
              const Clip& clip);

    const Clip& clip() const noexcept { return *clip_; }
    ad::Tape& tape() noexcept { return *tape_; }
    // Match matrix between clip positions src and dst (cached).
    ad::Var match(std::size_t src, std::size_t dst);

private:
    ad::Tape* tape_;
    const Clip* clip_;
    ad::Var gram_;
    std::vector<std::vector<int>> real_rows_;
    std::vector<std::vector<int>> all_cols_;
    std::vector<ad::Var> cache_;
};

// Spatial masks for a clip, computed once per ordered pair.
class MaskCache {
public:
    MaskCache(const Clip& clip, int S);
    const Eigen::MatrixXd& get(std::size_t src, std::size_t dst);
    int mask_size() const noexcept { return S_; }

private:
    const Clip* clip_;
    int S_;
    std::vector<std::optional<Eigen::MatrixXd>> cache_;
};

struct LossStats {
    double path_consistency = 0.0;  // L_PC (0 when no query)
    double one_to_one = 0.0;        // L_OM
    double bidirectional = 0.0;     // L_BC
    double two_view = 0.0;
    double total = 0.0;
    std::size_t query_count = 0;
    std::size_t frame_pairs = 0;
    std::size_t propagated_rows = 0;
    std::size_t degenerate_rows = 0;
    std::vector<std::size_t> paths_per_query;
    double mean_path_length = 0.0;  // frames per path
    double mean_skip_length = 0.0;  // skipped frames per skipping hop
    bool skipped = false;           // no QuerySample in the clip
};

// PCL of one query over its sampled paths, recorded on the graph's tape.
ad::Var path_consistency_term(ClipGraph& graph, MaskCache& masks, const QuerySample& sample,
                              const PathSet& paths, LossStats& stats,
                              bool check_identity = false);
ad::Var one_to_one_term(ClipGraph& graph, std::size_t* pair_count = nullptr);
ad::Var bidirectional_term(ClipGraph& graph);

struct LossEvaluation {
    LossTape tape;
    LossStats stats;
    double value() const { return tape.tape.scalar(tape.loss); }
};

// L = mean_q L_PC + L_OM + L_BC, each weighted 1.0, recorded on a fresh tape.
LossEvaluation total_loss(const Clip& clip, const ModelParams& params, const LossConfig& config,
                          Rng& rng);

}  // namespace pcmot
