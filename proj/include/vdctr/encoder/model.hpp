#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "vdctr/dataset/types.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/io/checkpoint.hpp"
#include "vdctr/io/embeddings.hpp"
#include "vdctr/numerics/layers.hpp"

namespace vdctr::encoder {

struct EncoderConfig {
  std::vector<std::size_t> hidden{64};
  std::size_t dim = 32;  // D
  double temperature = 1.0;
  bool literal_denominator = false;  // keep the anchor in its own denominator
};

/// Which training produced a checkpoint, and the hash of the checkpoint it
/// started from.
struct Provenance {
  std::string stage = "init";  // init | classifier | S1 | S2
  std::string parent_hash;
};

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoul(tok));
  }
  return out;
}

/// MLP visual encoder d_obs -> hidden... -> D. Embeddings leave the encoder
/// L2-normalized. The category head exists only for the classifier baseline.
class EncoderModel {
 public:
  EncoderModel() = default;

  EncoderModel(std::size_t d_obs, EncoderConfig cfg, std::uint64_t seed)
      : d_obs_(d_obs), cfg_(std::move(cfg)) {
    if (d_obs_ == 0 || cfg_.dim == 0) throw ConfigError("encoder: zero dimension");
    std::vector<std::size_t> sizes{d_obs_};
    std::vector<Activation> acts;
    for (std::size_t h : cfg_.hidden) {
      sizes.push_back(h);
      acts.push_back(Activation::kRelu);
    }
    sizes.push_back(cfg_.dim);
    acts.push_back(Activation::kIdentity);
    Rng rng = make_rng(seed, "encoder-init");
    backbone_ = Mlp("encoder", sizes, acts, rng);
  }

  std::size_t input_dim() const { return d_obs_; }
  std::size_t dim() const { return cfg_.dim; }
  const EncoderConfig& config() const { return cfg_; }
  EncoderConfig& config() { return cfg_; }
  Provenance& provenance() { return provenance_; }
  const Provenance& provenance() const { return provenance_; }
  Mlp& backbone() { return backbone_; }
  const Mlp& backbone() const { return backbone_; }
  bool has_head() const { return !head_.layers.empty(); }
  Mlp& head() { return head_; }

  void add_category_head(int n_categories, std::uint64_t seed) {
    Rng rng = make_rng(seed, "encoder-head");
    head_ = Mlp("encoder.head", {cfg_.dim, static_cast<std::size_t>(n_categories)},
                {Activation::kIdentity}, rng);
  }

  void set_frozen(bool frozen) {
    for (Parameter* p : parameters()) p->frozen = frozen;
  }
  bool frozen() const { return backbone_.layers.front().weight.frozen; }

  /// Trainable forward: [n x d_obs] images -> [n x D] unit rows.
  Var embed(Tape& tape, const Tensor& images) {
    check_input(images);
    return ops::l2_normalize(backbone_.forward(tape, tape.constant(images)));
  }

  /// Forward with the weights entering the tape as constants.
  Var embed_const(Tape& tape, const Tensor& images) const {
    check_input(images);
    return ops::l2_normalize(backbone_.forward_const(tape, tape.constant(images)));
  }

  std::vector<Parameter*> parameters() {
    auto p = backbone_.parameters();
    for (Parameter* h : head_.parameters()) p.push_back(h);
    return p;
  }

  std::vector<io::NamedTensor> to_checkpoint() const {
    std::vector<io::NamedTensor> out{
        io::meta_entry("stage", provenance_.stage),
        io::meta_entry("parent", provenance_.parent_hash),
        io::meta_entry("d_obs", std::to_string(d_obs_)),
        io::meta_entry("hidden", join_sizes(cfg_.hidden)),
        io::meta_entry("dim", std::to_string(cfg_.dim)),
    };
    for (const Parameter* p : backbone_.parameters()) out.push_back({p->name, p->value});
    return out;
  }

  static EncoderModel from_checkpoint(const std::vector<io::NamedTensor>& tensors) {
    const auto meta = io::read_meta(tensors);
    auto need = [&](const char* key) {
      auto it = meta.find(key);
      if (it == meta.end()) throw FormatError(std::string("encoder checkpoint lacks meta ") + key);
      return it->second;
    };
    EncoderConfig cfg;
    cfg.hidden = parse_sizes(need("hidden"));
    cfg.dim = std::stoul(need("dim"));
    EncoderModel m(std::stoul(need("d_obs")), cfg, 0);
    for (Parameter* p : m.backbone_.parameters()) {
      const Tensor& t = io::find_tensor(tensors, p->name);
      require_same_shape(p->value, t, "encoder checkpoint");
      p->value = t;
    }
    m.provenance_ = Provenance{need("stage"), need("parent")};
    return m;
  }

  /// Content hash of the serialized checkpoint.
  std::string hash() const { return io::content_hash(io::checkpoint_bytes(to_checkpoint())); }

  void save(const std::filesystem::path& path) const { io::save_checkpoint(path, to_checkpoint()); }
  static EncoderModel load(const std::filesystem::path& path) {
    return from_checkpoint(io::load_checkpoint(path));
  }

 private:
  void check_input(const Tensor& images) const {
    if (images.rank() != 2 || images.cols() != d_obs_) {
      throw DimensionError("encoder expects [n x " + std::to_string(d_obs_) + "] images, got " +
                           shape_string(images.shape()));
    }
  }

  std::size_t d_obs_ = 0;
  EncoderConfig cfg_;
  Mlp backbone_;
  Mlp head_;
  Provenance provenance_;
};

/// Rows of `images` stacked into a matrix.
inline Tensor stack_rows(const std::vector<const std::vector<double>*>& rows, std::size_t width) {
  Tensor out(Shape{rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r]->size() != width) throw DimensionError("image width mismatch");
    std::copy(rows[r]->begin(), rows[r]->end(), out.row(r).begin());
  }
  return out;
}

/// Encodes images in input order into unit rows. A near-zero raw embedding
/// throws DegenerateVectorError naming the offending id.
inline io::EmbeddingTable encode_images(const EncoderModel& model,
                                        const std::vector<std::uint64_t>& ids,
                                        const std::vector<const std::vector<double>*>& images,
                                        std::size_t chunk = 512) {
  if (ids.size() != images.size()) throw DimensionError("encode: ids and images disagree");
  const std::size_t d = model.dim();
  io::EmbeddingTable out{ids, Tensor(Shape{ids.size(), d})};
  for (std::size_t start = 0; start < ids.size(); start += chunk) {
    const std::size_t end = std::min(ids.size(), start + chunk);
    std::vector<const std::vector<double>*> rows(images.begin() + start, images.begin() + end);
    Tape tape;
    Var raw = model.backbone().forward_const(tape, tape.constant(stack_rows(rows, model.input_dim())));
    const Tensor& rv = raw.value();
    for (std::size_t r = 0; r < rv.rows(); ++r) {
      const double n = l2_norm(rv.row(r));
      if (!(n > kNormFloor)) {
        throw DegenerateVectorError("degenerate embedding for id " + std::to_string(ids[start + r]));
      }
      for (std::size_t j = 0; j < d; ++j) out.rows.at(start + r, j) = rv.at(r, j) / n;
    }
  }
  return out;
}

inline io::EmbeddingTable encode_catalog(const EncoderModel& model,
                                         const std::vector<data::Item>& items) {
  std::vector<std::uint64_t> ids;
  std::vector<const std::vector<double>*> images;
  for (const auto& it : items) {
    ids.push_back(static_cast<std::uint64_t>(it.item_id));
    images.push_back(&it.image);
  }
  return encode_images(model, ids, images);
}

inline io::EmbeddingTable encode_queries(const EncoderModel& model,
                                         const std::vector<data::Query>& queries) {
  std::vector<std::uint64_t> ids;
  std::vector<const std::vector<double>*> images;
  for (const auto& q : queries) {
    ids.push_back(static_cast<std::uint64_t>(q.query_id));
    images.push_back(&q.image);
  }
  return encode_images(model, ids, images);
}

}  // namespace vdctr::encoder
