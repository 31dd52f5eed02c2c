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

#include "pcmot/model.hpp"

#include "pcmot/error.hpp"
#include "pcmot/random.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace pcmot {

std::size_t ParamTensors::parameter_count() const noexcept {
    std::size_t n = static_cast<std::size_t>(null_embedding.size());
    for (const auto& layer : layers) {
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return n;
}

std::vector<double> ParamTensors::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& layer : layers) {
        flat.insert(flat.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
        flat.insert(flat.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
    flat.insert(flat.end(), null_embedding.data(), null_embedding.data() + null_embedding.size());
    return flat;
}

void ParamTensors::assign_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                         std::to_string(parameter_count()));
    }
    const double* p = flat.data();
    for (auto& layer : layers) {
        std::memcpy(layer.weight.data(), p, sizeof(double) * static_cast<std::size_t>(layer.weight.size()));
        p += layer.weight.size();
        std::memcpy(layer.bias.data(), p, sizeof(double) * static_cast<std::size_t>(layer.bias.size()));
        p += layer.bias.size();
    }
    std::memcpy(null_embedding.data(), p, sizeof(double) * static_cast<std::size_t>(null_embedding.size()));
}

ParamTensors ParamTensors::zeros_like() const {
    ParamTensors z;
    for (const auto& layer : layers) {
        z.layers.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                            Eigen::VectorXd::Zero(layer.bias.size())});
    }
    z.null_embedding = Eigen::VectorXd::Zero(null_embedding.size());
    return z;
}

bool ParamTensors::all_finite() const noexcept {
    for (const auto& layer : layers) {
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
    return null_embedding.allFinite();
}

void ModelConfig::validate() const {
    if (appearance_dim < 0) throw ConfigError("invalid model config 'appearance_dim': must be >= 0");
    if (hidden_dim < 1) throw ConfigError("invalid model config 'hidden_dim': must be >= 1");
    if (embedding_dim < 1) throw ConfigError("invalid model config 'embedding_dim': must be >= 1");
    if (!(arena_width > 0.0) || !(arena_height > 0.0)) {
        throw ConfigError("invalid model config 'arena': width and height must be positive");
    }
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, ModelConfig{}); }

ModelConfig ModelConfig::from_config(const KeyValueConfig& kv, const ModelConfig& d) {
    ModelConfig c = d;
    c.appearance_dim = static_cast<int>(kv.get_int("appearance_dim", d.appearance_dim));
    c.hidden_dim = static_cast<int>(kv.get_int("hidden_dim", d.hidden_dim));
    c.embedding_dim = static_cast<int>(kv.get_int("embedding_dim", d.embedding_dim));
    c.arena_width = kv.get_double("arena_width", d.arena_width);
    c.arena_height = kv.get_double("arena_height", d.arena_height);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(d.seed)));
    c.validate();
    return c;
}

void ModelConfig::write_to(KeyValueConfig& kv) const {
    kv.set("appearance_dim", std::to_string(appearance_dim));
    kv.set("hidden_dim", std::to_string(hidden_dim));
    kv.set("embedding_dim", std::to_string(embedding_dim));
    kv.set_number("arena_width", arena_width);
    kv.set_number("arena_height", arena_height);
}

ModelParams ModelParams::initialize(const ModelConfig& config) {
    config.validate();
    Rng rng = make_rng(config.seed, "model-init");
    const int dims[3] = {config.appearance_dim + 5, config.hidden_dim, config.embedding_dim};
    ModelParams params;
    params.arena_width = config.arena_width;
    params.arena_height = config.arena_height;
    for (int l = 0; l < 2; ++l) {
        // Xavier-uniform weights, zero biases.
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        DenseLayer layer;
        layer.weight.resize(dims[l + 1], dims[l]);
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
        }
        layer.bias = Eigen::VectorXd::Zero(dims[l + 1]);
        params.layers.push_back(std::move(layer));
    }
    std::normal_distribution<double> gauss(0.0, 0.1);
    params.null_embedding.resize(config.embedding_dim);
    for (int d = 0; d < config.embedding_dim; ++d) params.null_embedding[d] = gauss(rng);
    return params;
}

bool ModelParams::identical_to(const ModelParams& other) const noexcept {
    auto same = [](const auto& a, const auto& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() &&
               std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
    };
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!same(layers[l].weight, other.layers[l].weight) || !same(layers[l].bias, other.layers[l].bias)) {
            return false;
        }
    }
    return same(null_embedding, other.null_embedding) &&
           std::memcmp(&arena_width, &other.arena_width, sizeof(double)) == 0 &&
           std::memcmp(&arena_height, &other.arena_height, sizeof(double)) == 0;
}

Eigen::RowVectorXd input_features(const ModelParams& params, const Detection& det) {
    if (det.is_null || !det.box) throw ShapeError("input_features: null object has no features");
    const int a = params.appearance_dim();
    if (det.appearance.size() != a) {
        throw ShapeError("appearance descriptor has " + std::to_string(det.appearance.size()) +
                         " entries, model expects " + std::to_string(a));
    }
    Eigen::RowVectorXd x(a + 5);
    x.head(a) = det.appearance.transpose();
    const Box& b = *det.box;
    x[a + 0] = b.left / params.arena_width;
    x[a + 1] = b.top / params.arena_height;
    x[a + 2] = b.right / params.arena_width;
    x[a + 3] = b.bottom / params.arena_height;
    x[a + 4] = b.confidence;
    return x;
}

Eigen::MatrixXd input_features(const ModelParams& params, std::span<const Detection> dets) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(dets.size()), params.input_dim());
    for (std::size_t i = 0; i < dets.size(); ++i) {
        X.row(static_cast<Eigen::Index>(i)) = input_features(params, dets[i]);
    }
    return X;
}

namespace {

Eigen::MatrixXd forward_rows(const ModelParams& params, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd a = X;
    for (const auto& layer : params.layers) {
        Eigen::MatrixXd z = a * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        a = z.array().tanh().matrix();
    }
    return a;
}

}  // namespace

EmbeddingMatrix embed_frame(const ModelParams& params, const FrameObjects& frame) {
    EmbeddingMatrix out;
    out.frame = frame.frame();
    const auto n = static_cast<Eigen::Index>(frame.real_count());
    out.H.resize(n + 1, params.embedding_dim());
    if (n > 0) out.H.topRows(n) = forward_rows(params, input_features(params, frame.reals()));
    out.H.row(n) = params.null_embedding.transpose();
    return out;
}

MatchMatrix match_matrix(const EmbeddingMatrix& src, const EmbeddingMatrix& dst) {
    if (src.H.cols() != dst.H.cols()) {
        throw ShapeError("match_matrix: embedding dimensions differ (" + std::to_string(src.H.cols()) +
                         " vs " + std::to_string(dst.H.cols()) + ")");
    }
    if (src.H.rows() < 1 || dst.H.rows() < 1) throw ShapeError("match_matrix: missing null row");
    MatchMatrix out;
    out.src_frame = src.frame;
    out.dst_frame = dst.frame;
    const Eigen::Index n = src.H.rows() - 1;
    const Eigen::Index m = dst.H.rows();
    out.P.resize(n + 1, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd logits = src.H.row(i) * dst.H.transpose();
        const double mx = logits.maxCoeff();
        logits = (logits.array() - mx).exp().matrix();
        out.P.row(i) = logits / logits.sum();
    }
    out.P.row(n).setZero();
    out.P(n, m - 1) = 1.0;
    return out;
}

BoundModel bind(ad::Tape& tape, const ParamTensors& params) {
    BoundModel bound;
    for (const auto& layer : params.layers) {
        bound.weights.push_back(tape.parameter(layer.weight, "weight"));
        bound.biases.push_back(tape.parameter(layer.bias.transpose(), "bias"));
    }
    bound.null_embedding = tape.parameter(params.null_embedding.transpose(), "null_embedding");
    return bound;
}

ad::Var embed_rows(ad::Tape& tape, const BoundModel& model, const Eigen::MatrixXd& features) {
    ad::Var a = tape.constant(features, "features");
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        a = tape.tanh(tape.add_row_broadcast(tape.matmul_nt(a, model.weights[l]), model.biases[l]));
    }
    return a;
}

Gradients collect_gradients(const ad::Tape& tape, const BoundModel& model, const ParamTensors& shape) {
    Gradients g = shape.zeros_like();
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        g.layers[l].weight = tape.grad(model.weights[l]);
        g.layers[l].bias = tape.grad(model.biases[l]).transpose();
    }
    g.null_embedding = tape.grad(model.null_embedding).transpose();
    return g;
}

Gradients backward(const ModelParams& params, LossTape& loss_tape) {
    loss_tape.tape.backward(loss_tape.loss);
    Gradients g = collect_gradients(loss_tape.tape, loss_tape.model, params);
    if (!g.all_finite()) throw NumericalError("non-finite parameter gradient");
    return g;
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr const char* kMagic = "pcmot-checkpoint";
constexpr int kVersion = 1;

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    char buf[40];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%a", m(r, c));
            out << (c ? " " : "") << buf;
        }
        out << '\n';
    }
}

double parse_hex(const std::string& tok, const std::string& source, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size()) {
        throw ParseError(source, line, "bad tensor value '" + tok + "'");
    }
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
    char buf[40];
    out << kMagic << ' ' << kVersion << '\n';
    std::snprintf(buf, sizeof(buf), "%a", params.arena_width);
    out << "meta arena_width " << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%a", params.arena_height);
    out << "meta arena_height " << buf << '\n';
    out << "meta layers " << params.layers.size() << '\n';
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        write_tensor(out, "layer" + std::to_string(l) + ".weight", params.layers[l].weight);
        write_tensor(out, "layer" + std::to_string(l) + ".bias", params.layers[l].bias.transpose());
    }
    write_tensor(out, "null_embedding", params.null_embedding.transpose());
    out << "end\n";
}

ModelParams read_checkpoint(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t number = 0;
    auto next_line = [&]() -> std::istringstream {
        if (!std::getline(in, line)) throw ParseError(source, number + 1, "unexpected end of checkpoint");
        ++number;
        return std::istringstream(line);
    };

    {
        auto ss = next_line();
        std::string magic;
        int version = 0;
        ss >> magic >> version;
        if (magic != kMagic) throw ParseError(source, number, "not a pcmot checkpoint");
        if (version != kVersion) {
            throw ParseError(source, number, "unsupported checkpoint version " + std::to_string(version));
        }
    }
    ModelParams params;
    std::size_t layer_count = 0;
    auto read_tensor = [&](const std::string& expected) {
        auto ss = next_line();
        std::string kw, name;
        Eigen::Index rows = -1, cols = -1;
        ss >> kw >> name >> rows >> cols;
        if (kw != "tensor" || name != expected || rows < 0 || cols < 0) {
            throw ParseError(source, number, "expected tensor header for " + expected);
        }
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            auto row = next_line();
            for (Eigen::Index c = 0; c < cols; ++c) {
                std::string tok;
                if (!(row >> tok)) throw ParseError(source, number, "short tensor row in " + expected);
                m(r, c) = parse_hex(tok, source, number);
            }
        }
        return m;
    };

    while (true) {
        auto ss = next_line();
        std::string kw;
        ss >> kw;
        if (kw != "meta") {
            throw ParseError(source, number, "expected meta entry");
        }
        std::string key, value;
        ss >> key >> value;
        if (key == "arena_width") {
            params.arena_width = parse_hex(value, source, number);
        } else if (key == "arena_height") {
            params.arena_height = parse_hex(value, source, number);
        } else if (key == "layers") {
            layer_count = static_cast<std::size_t>(std::stoul(value));
            break;
        } else {
            throw ParseError(source, number, "unknown meta key '" + key + "'");
        }
    }
    for (std::size_t l = 0; l < layer_count; ++l) {
        DenseLayer layer;
        layer.weight = read_tensor("layer" + std::to_string(l) + ".weight");
        layer.bias = read_tensor("layer" + std::to_string(l) + ".bias").transpose();
        if (layer.bias.size() != layer.weight.rows()) {
            throw ParseError(source, number, "bias length does not match layer " + std::to_string(l));
        }
        if (l > 0 && layer.weight.cols() != params.layers.back().weight.rows()) {
            throw ParseError(source, number, "layer " + std::to_string(l) + " input size mismatch");
        }
        params.layers.push_back(std::move(layer));
    }
    params.null_embedding = read_tensor("null_embedding").transpose();
    if (params.layers.empty() || params.null_embedding.size() != params.layers.back().weight.rows()) {
        throw ParseError(source, number, "null embedding length does not match the model");
    }
    auto ss = next_line();
    std::string kw;
    ss >> kw;
    if (kw != "end") throw ParseError(source, number, "missing end marker");
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    write_checkpoint(out, params);
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    return read_checkpoint(in, path.string());
}

}  // namespace pcmot
