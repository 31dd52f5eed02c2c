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
#include "pcmot/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pcmot {

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

// Trainable tensors. Gradients share this exact layout.
struct ParamTensors {
    std::vector<DenseLayer> layers;
    Eigen::VectorXd null_embedding;

    std::size_t parameter_count() const noexcept;
    std::vector<double> flatten() const;
    // Throws ShapeError when the span length differs from parameter_count().
    void assign_flat(std::span<const double> flat);
    ParamTensors zeros_like() const;
    bool all_finite() const noexcept;
};

using Gradients = ParamTensors;

struct ModelConfig {
    int appearance_dim = 16;
    int hidden_dim = 64;
    int embedding_dim = 32;
    double arena_width = 640.0;
    double arena_height = 480.0;
    std::uint64_t seed = 0;

    void validate() const;
    static ModelConfig from_config(const KeyValueConfig& kv);
    static ModelConfig from_config(const KeyValueConfig& kv, const ModelConfig& defaults);
    void write_to(KeyValueConfig& kv) const;
};

// MLP embedding model: (appearance ++ normalized box 5-tuple) -> hidden ->
// embedding, tanh after each layer, plus a learned null embedding. The arena
// size fixes the box normalization and is not trained.
struct ModelParams : ParamTensors {
    double arena_width = 640.0;
    double arena_height = 480.0;

    static ModelParams initialize(const ModelConfig& config);

    int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
    int appearance_dim() const { return input_dim() - 5; }
    int embedding_dim() const { return static_cast<int>(null_embedding.size()); }

    // Bitwise equality of every tensor and the normalization constants.
    bool identical_to(const ModelParams& other) const noexcept;
};

struct EmbeddingMatrix {
    int frame = 0;
    Eigen::MatrixXd H;  // N_t x D, last row is the null embedding
};

// Row-stochastic matching probabilities between two frames. The last row
// (null source) is one-hot on the last column (null destination).
struct MatchMatrix {
    int src_frame = 0;
    int dst_frame = 0;
    Eigen::MatrixXd P;

    Eigen::Index real_rows() const noexcept { return P.rows() - 1; }
    Eigen::Index real_cols() const noexcept { return P.cols() - 1; }
};

// Network input row for a real detection. Throws ShapeError when the
// appearance length does not match the model.
Eigen::RowVectorXd input_features(const ModelParams& params, const Detection& det);
Eigen::MatrixXd input_features(const ModelParams& params, std::span<const Detection> dets);

EmbeddingMatrix embed_frame(const ModelParams& params, const FrameObjects& frame);

// Softmax of embedding dot products, evaluated with the max-shift so large
// logits do not overflow. Throws ShapeError on a dimension mismatch.
MatchMatrix match_matrix(const EmbeddingMatrix& src, const EmbeddingMatrix& dst);

// Model parameters registered on a tape as differentiable leaves.
struct BoundModel {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
    ad::Var null_embedding;
};

BoundModel bind(ad::Tape& tape, const ParamTensors& params);

// Embeddings of the real rows of features (n x input_dim) -> n x D.
ad::Var embed_rows(ad::Tape& tape, const BoundModel& model, const Eigen::MatrixXd& features);

Gradients collect_gradients(const ad::Tape& tape, const BoundModel& model,
                            const ParamTensors& shape);

// A recorded forward computation of a scalar loss.
struct LossTape {
    ad::Tape tape;
    BoundModel model;
    ad::Var loss;
};

// Exact reverse-mode derivatives of tape.loss with respect to every model
// parameter. Throws NumericalError if a non-finite gradient appears.
Gradients backward(const ModelParams& params, LossTape& loss_tape);

// Self-describing text checkpoint; values are hex floats, so
// load_checkpoint(save_checkpoint(p)) reproduces p bitwise.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in, const std::string& source = "<stream>");

}  // namespace pcmot
