#ifndef SETRNN_PARAMETERS_HPP
#define SETRNN_PARAMETERS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "setrnn/types.hpp"

namespace setrnn {

/// Architecture hyperparameters of the encoder-decoder.
struct ModelConfig {
  int vocab_size = 0;
  int num_labels = 0;
  int embed_dim = 64;
  int hidden_dim = 64;
  int attention_dim = 64;
  int output_dim = 64;  // width of the hidden layer inside the output network
  int num_layers = 2;
  int max_doc_len = 120;
  bool repeat_masking = true;
  double dropout = 0.0;

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v < 1) throw ConfigError(std::string(what) + " must be >= 1, got " + std::to_string(v));
    };
    positive(vocab_size, "vocab_size");
    positive(num_labels, "num_labels");
    positive(embed_dim, "embed_dim");
    positive(hidden_dim, "hidden_dim");
    positive(attention_dim, "attention_dim");
    positive(output_dim, "output_dim");
    positive(num_layers, "num_layers");
    positive(max_doc_len, "max_doc_len");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Block indices of one GRU layer.
struct GruBlocks {
  int w_update, w_reset, w_cand;  // input weights   [hidden x input]
  int u_update, u_reset, u_cand;  // recurrent weights [hidden x hidden]
  int b_update, b_reset, b_cand;  // biases [hidden x 1]
};

/// Where each named parameter block lives in the block list.
struct ParameterLayout {
  int word_embeddings = -1;   // [vocab x embed]
  int label_embeddings = -1;  // [(L+1) x embed], row 0 is STOP / begin-of-sequence
  std::vector<GruBlocks> encoder;
  std::vector<GruBlocks> decoder;
  int att_query = -1;  // [att x hidden]
  int att_key = -1;    // [att x hidden]
  int att_bias = -1;   // [att x 1]
  int att_score = -1;  // [att x 1]
  int out_hidden = -1;       // [out x (hidden + hidden + embed)]
  int out_hidden_bias = -1;  // [out x 1]
  int out_logits = -1;       // [(L+1) x out]
  int out_logits_bias = -1;  // [(L+1) x 1]
};

struct BlockShape {
  std::string name;
  int rows = 0;
  int cols = 0;
};

inline std::vector<BlockShape> parameter_shapes(const ModelConfig& cfg, ParameterLayout* layout = nullptr) {
  cfg.validate();
  std::vector<BlockShape> shapes;
  ParameterLayout lay;
  auto add = [&](std::string name, int rows, int cols) {
    shapes.push_back({std::move(name), rows, cols});
    return static_cast<int>(shapes.size()) - 1;
  };
  const int h = cfg.hidden_dim;
  lay.word_embeddings = add("word_embeddings", cfg.vocab_size, cfg.embed_dim);
  lay.label_embeddings = add("label_embeddings", cfg.num_labels + 1, cfg.embed_dim);
  auto gru = [&](const std::string& prefix, int input) {
    GruBlocks g{};
    g.w_update = add(prefix + ".w_update", h, input);
    g.w_reset = add(prefix + ".w_reset", h, input);
    g.w_cand = add(prefix + ".w_candidate", h, input);
    g.u_update = add(prefix + ".u_update", h, h);
    g.u_reset = add(prefix + ".u_reset", h, h);
    g.u_cand = add(prefix + ".u_candidate", h, h);
    g.b_update = add(prefix + ".b_update", h, 1);
    g.b_reset = add(prefix + ".b_reset", h, 1);
    g.b_cand = add(prefix + ".b_candidate", h, 1);
    return g;
  };
  for (int l = 0; l < cfg.num_layers; ++l) {
    lay.encoder.push_back(gru("encoder." + std::to_string(l), l == 0 ? cfg.embed_dim : h));
  }
  for (int l = 0; l < cfg.num_layers; ++l) {
    lay.decoder.push_back(gru("decoder." + std::to_string(l), l == 0 ? cfg.embed_dim : h));
  }
  lay.att_query = add("attention.query", cfg.attention_dim, h);
  lay.att_key = add("attention.key", cfg.attention_dim, h);
  lay.att_bias = add("attention.bias", cfg.attention_dim, 1);
  lay.att_score = add("attention.score", cfg.attention_dim, 1);
  lay.out_hidden = add("output.hidden", cfg.output_dim, h + h + cfg.embed_dim);
  lay.out_hidden_bias = add("output.hidden_bias", cfg.output_dim, 1);
  lay.out_logits = add("output.logits", cfg.num_labels + 1, cfg.output_dim);
  lay.out_logits_bias = add("output.logits_bias", cfg.num_labels + 1, 1);
  if (layout != nullptr) *layout = std::move(lay);
  return shapes;
}

/// All trainable arrays of the model as named dense blocks, with a flat view
/// used by the optimizer and by finite-difference checks.
template <std::floating_point Real>
class ModelParameters {
 public:
  using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

  struct Block {
    std::string name;
    Matrix value;
  };

  ModelParameters() = default;

  static ModelParameters zeros(const ModelConfig& cfg) {
    ModelParameters p;
    for (auto& s : parameter_shapes(cfg, &p.layout_)) {
      p.blocks_.push_back({s.name, Matrix::Zero(s.rows, s.cols)});
    }
    return p;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights, Uniform(-0.1, 0.1)
  /// for embeddings, zero biases.
  static ModelParameters initialize(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParameters p = zeros(cfg);
    std::mt19937_64 rng(seed);
    for (auto& b : p.blocks_) {
      if (b.value.cols() == 1 && b.name.find("score") == std::string::npos) continue;
      const bool embedding = b.name.find("embeddings") != std::string::npos;
      const double bound = embedding ? 0.1 : 1.0 / std::sqrt(static_cast<double>(b.value.cols() == 1 ? b.value.rows() : b.value.cols()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index c = 0; c < b.value.cols(); ++c) {
        for (Eigen::Index r = 0; r < b.value.rows(); ++r) b.value(r, c) = static_cast<Real>(dist(rng));
      }
    }
    return p;
  }

  [[nodiscard]] const ParameterLayout& layout() const { return layout_; }
  [[nodiscard]] std::size_t num_blocks() const { return blocks_.size(); }
  [[nodiscard]] Block& block(int i) { return blocks_.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] const Block& block(int i) const { return blocks_.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] Matrix& operator[](int i) { return blocks_[static_cast<std::size_t>(i)].value; }
  [[nodiscard]] const Matrix& operator[](int i) const { return blocks_[static_cast<std::size_t>(i)].value; }
  [[nodiscard]] const std::vector<Block>& blocks() const { return blocks_; }

  /// Total number of scalar entries.
  [[nodiscard]] std::size_t size() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
    return n;
  }

  /// Entries block by block, column-major within a block.
  [[nodiscard]] std::vector<Real> flatten() const {
    std::vector<Real> flat;
    flat.reserve(size());
    for (const auto& b : blocks_) flat.insert(flat.end(), b.value.data(), b.value.data() + b.value.size());
    return flat;
  }

  void unflatten(std::span<const Real> flat) {
    if (flat.size() != size()) {
      throw ConfigError("flat parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                        std::to_string(size()));
    }
    std::size_t off = 0;
    for (auto& b : blocks_) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), b.value.size(), b.value.data());
      off += static_cast<std::size_t>(b.value.size());
    }
  }

  [[nodiscard]] ModelParameters zeros_like() const {
    ModelParameters p = *this;
    p.set_zero();
    return p;
  }

  void set_zero() {
    for (auto& b : blocks_) b.value.setZero();
  }

  void check_same_shape(const ModelParameters& other) const {
    if (other.blocks_.size() != blocks_.size()) throw ConfigError("parameter block count mismatch");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (other.blocks_[i].value.rows() != blocks_[i].value.rows() ||
          other.blocks_[i].value.cols() != blocks_[i].value.cols()) {
        throw ConfigError("shape mismatch in parameter block " + blocks_[i].name);
      }
    }
  }

  ModelParameters& add_scaled(const ModelParameters& other, Real scale) {
    check_same_shape(other);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].value += scale * other.blocks_[i].value;
    return *this;
  }

  ModelParameters& scale(Real factor) {
    for (auto& b : blocks_) b.value *= factor;
    return *this;
  }

  /// Converts to another precision (e.g. for checkpoints stored in double).
  template <std::floating_point Other>
  [[nodiscard]] ModelParameters<Other> cast() const {
    ModelParameters<Other> out;
    out.layout_ = layout_;
    for (const auto& b : blocks_) out.blocks_.push_back({b.name, b.value.template cast<Other>()});
    return out;
  }

  friend bool operator==(const ModelParameters& a, const ModelParameters& b) {
    if (a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
      if (a.blocks_[i].name != b.blocks_[i].name) return false;
      if (a.blocks_[i].value.rows() != b.blocks_[i].value.rows() ||
          a.blocks_[i].value.cols() != b.blocks_[i].value.cols())
        return false;
      if (a.blocks_[i].value != b.blocks_[i].value) return false;
    }
    return true;
  }

 private:
  template <std::floating_point>
  friend class ModelParameters;

  ParameterLayout layout_;
  std::vector<Block> blocks_;
};

}  // namespace setrnn

#endif  // SETRNN_PARAMETERS_HPP
