#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vdctr/dataset/types.hpp"
#include "vdctr/debias/network.hpp"
#include "vdctr/encoder/model.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/io/checkpoint.hpp"
#include "vdctr/numerics/adagrad.hpp"
#include "vdctr/numerics/layers.hpp"

namespace vdctr::ctr {

struct TrainSample {
  const std::vector<double>* query_image = nullptr;
  const std::vector<double>* item_image = nullptr;
  std::int64_t query_id = 0;
  std::int64_t user_id = 0;
  std::int64_t item_id = 0;
  std::int64_t category_id = 0;
  std::int64_t context_id = 0;
  double label = 0.0;
};

inline std::vector<TrainSample> make_samples(const std::vector<data::ClickEvent>& events,
                                             const std::vector<data::Item>& items,
                                             const std::vector<data::Query>& queries) {
  std::vector<TrainSample> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    const auto& it = items.at(static_cast<std::size_t>(e.item_id));
    const auto& q = queries.at(static_cast<std::size_t>(e.query_id));
    out.push_back(TrainSample{&q.image, &it.image, e.query_id, e.user_id, e.item_id,
                              it.category_id, e.context_id, static_cast<double>(e.clicked)});
  }
  return out;
}

enum class Field : std::size_t { kUser = 0, kItem, kCategory, kContext };
inline constexpr std::array<const char*, 4> kFieldNames{"user", "item", "category", "context"};

/// Lookup tables for the ID features. Row 0 of every table is the OOV row
/// that ids unseen during vocabulary construction map to.
class FeatureVocab {
 public:
  FeatureVocab() = default;

  FeatureVocab(const std::vector<TrainSample>& train, std::size_t width, std::uint64_t seed)
      : width_(width) {
    if (width_ == 0) throw ConfigError("embedding width must be positive");
    for (const auto& s : train) {
      add(Field::kUser, s.user_id);
      add(Field::kItem, s.item_id);
      add(Field::kCategory, s.category_id);
      add(Field::kContext, s.context_id);
    }
    Rng rng = make_rng(seed, "vocab-init");
    for (std::size_t f = 0; f < 4; ++f) {
      const std::size_t rows = ids_[f].size() + 1;
      tables_[f] = Parameter{std::string("emb.") + kFieldNames[f], glorot_uniform(rows, width_, rng)};
    }
  }

  std::size_t width() const { return width_; }

  std::size_t row(Field f, std::int64_t id) const {
    const auto& m = rows_[static_cast<std::size_t>(f)];
    auto it = m.find(id);
    return it == m.end() ? 0 : it->second;
  }

  Parameter& table(Field f) { return tables_[static_cast<std::size_t>(f)]; }

  std::vector<Parameter*> parameters() {
    return {&tables_[0], &tables_[1], &tables_[2], &tables_[3]};
  }

  void append_checkpoint(std::vector<io::NamedTensor>& out) const {
    for (std::size_t f = 0; f < 4; ++f) {
      std::vector<double> ids(ids_[f].begin(), ids_[f].end());
      out.push_back({std::string("vocab.") + kFieldNames[f] + ".ids", Tensor::vector(std::move(ids))});
      out.push_back({tables_[f].name, tables_[f].value});
    }
  }

 private:
  void add(Field f, std::int64_t id) {
    auto& m = rows_[static_cast<std::size_t>(f)];
    if (m.emplace(id, ids_[static_cast<std::size_t>(f)].size() + 1).second) {
      ids_[static_cast<std::size_t>(f)].push_back(id);
    }
  }

  std::size_t width_ = 0;
  std::array<std::unordered_map<std::int64_t, std::size_t>, 4> rows_;
  std::array<std::vector<std::int64_t>, 4> ids_;
  std::array<Parameter, 4> tables_;
};

struct CtrConfig {
  std::vector<std::size_t> tower{64, 32, 16};
  std::size_t embed_width = 8;
  bool use_debias = false;
  double lambda = 1.0;
  debias::DebiasConfig debias{};
  std::size_t top_k = 15;
  std::int64_t non_displayed_threshold = 1;
  AdagradConfig optimizer{};
  int epochs = 5;
  std::size_t batch_size = 256;
  std::uint64_t seed = 7;
};

/// CTR predictor: frozen visual encoder (through cached v^S2 features), the
/// optional debias network, ID lookup tables, and a relu tower with a sigmoid
/// output. Input layout: v_q | v_p | user | item | category | context.
class CtrModel {
 public:
  CtrModel(const encoder::EncoderModel& encoder, const std::vector<data::Item>& items,
           const std::vector<data::Query>& queries, const std::vector<TrainSample>& train,
           CtrConfig cfg)
      : cfg_(std::move(cfg)), encoder_(encoder) {
    encoder_.set_frozen(true);
    dim_ = encoder_.dim();
    item_features_ = encoder::encode_catalog(encoder_, items).rows;
    query_features_ = encoder::encode_queries(encoder_, queries).rows;
    vocab_ = FeatureVocab(train, cfg_.embed_width, cfg_.seed);
    std::vector<std::size_t> sizes{input_width()};
    std::vector<Activation> acts;
    for (std::size_t h : cfg_.tower) {
      sizes.push_back(h);
      acts.push_back(Activation::kRelu);
    }
    sizes.push_back(1);
    acts.push_back(Activation::kIdentity);
    Rng rng = make_rng(cfg_.seed, "tower-init");
    tower_ = Mlp("tower", sizes, acts, rng);
    if (cfg_.use_debias) debias_.emplace(dim_, cfg_.debias, cfg_.seed);
  }

  const CtrConfig& config() const { return cfg_; }
  CtrConfig& config() { return cfg_; }
  std::size_t dim() const { return dim_; }
  std::size_t input_width() const { return 2 * dim_ + 4 * cfg_.embed_width; }
  const encoder::EncoderModel& encoder() const { return encoder_; }
  FeatureVocab& vocab() { return vocab_; }
  Mlp& tower() { return tower_; }
  bool has_debias() const { return debias_.has_value(); }
  debias::DebiasModel& debias() { return *debias_; }
  const Tensor& item_features() const { return item_features_; }
  const Tensor& query_features() const { return query_features_; }

  std::string layout() const {
    const std::string w = std::to_string(cfg_.embed_width);
    return "v_q:" + std::to_string(dim_) + ",v_p:" + std::to_string(dim_) + ",user:" + w +
           ",item:" + w + ",category:" + w + ",context:" + w;
  }

  /// v^S2 of one item, from the cache or, for an id outside it, the encoder.
  std::vector<double> item_visual(std::int64_t id, const std::vector<double>* image) const {
    return visual(item_features_, id, image);
  }
  std::vector<double> query_visual(std::int64_t id, const std::vector<double>* image) const {
    return visual(query_features_, id, image);
  }

  std::vector<Parameter*> parameters() {
    auto p = vocab_.parameters();
    for (Parameter* t : tower_.parameters()) p.push_back(t);
    if (debias_) {
      for (Parameter* d : debias_->parameters()) p.push_back(d);
    }
    return p;
  }

  /// Fused visual feature rows v_p for a batch of v^S2 rows.
  Var item_feature(Tape& tape, const Var& v_s2) {
    if (!debias_) return v_s2;
    return debias_->fuse(tape, v_s2, debias_->forward(tape, v_s2));
  }

  /// Distinct items of a batch in first-appearance order, their v^S2 rows,
  /// and the row of each sample.
  struct BatchItems {
    std::vector<std::int64_t> ids;
    Tensor v_s2;
    std::vector<std::size_t> rows;
  };

  BatchItems batch_items(const std::vector<const TrainSample*>& batch) const {
    BatchItems out;
    std::unordered_map<std::int64_t, std::size_t> slot;
    std::vector<const TrainSample*> first;
    for (const TrainSample* s : batch) {
      auto [it, fresh] = slot.emplace(s->item_id, out.ids.size());
      if (fresh) {
        out.ids.push_back(s->item_id);
        first.push_back(s);
      }
      out.rows.push_back(it->second);
    }
    out.v_s2 = Tensor(Shape{out.ids.size(), dim_});
    for (std::size_t r = 0; r < out.ids.size(); ++r) {
      const auto v = item_visual(out.ids[r], first[r]->item_image);
      std::copy(v.begin(), v.end(), out.v_s2.row(r).begin());
    }
    return out;
  }

  /// Concatenated tower input, [n x input_width], with v_p taken from row
  /// item_rows[r] of `v_p` for sample r.
  Var assemble_from(Tape& tape, const std::vector<const TrainSample*>& batch, const Var& v_p,
                    const std::vector<std::size_t>& item_rows) {
    const std::size_t n = batch.size();
    if (v_p.value().cols() != dim_) {
      throw DimensionError("item feature width " + std::to_string(v_p.value().cols()) +
                           " does not match layout " + layout());
    }
    Tensor vq(Shape{n, dim_});
    std::array<std::vector<std::size_t>, 4> rows;
    for (std::size_t r = 0; r < n; ++r) {
      const TrainSample& s = *batch[r];
      const auto q = query_visual(s.query_id, s.query_image);
      std::copy(q.begin(), q.end(), vq.row(r).begin());
      rows[0].push_back(vocab_.row(Field::kUser, s.user_id));
      rows[1].push_back(vocab_.row(Field::kItem, s.item_id));
      rows[2].push_back(vocab_.row(Field::kCategory, s.category_id));
      rows[3].push_back(vocab_.row(Field::kContext, s.context_id));
    }
    Var x = ops::concat_cols(tape.constant(std::move(vq)), ops::gather_rows(v_p, item_rows));
    for (std::size_t f = 0; f < 4; ++f) {
      x = ops::concat_cols(x, ops::gather_rows(tape.param(vocab_.table(static_cast<Field>(f))), rows[f]));
    }
    if (x.value().cols() != input_width()) {
      throw DimensionError("assembled input width " + std::to_string(x.value().cols()) +
                           " does not match layout " + layout());
    }
    return x;
  }

  Var assemble(Tape& tape, const std::vector<const TrainSample*>& batch) {
    BatchItems items = batch_items(batch);
    Var v_p = item_feature(tape, tape.constant(std::move(items.v_s2)));
    return assemble_from(tape, batch, v_p, items.rows);
  }

  /// Sigmoid of the tower output, [n].
  Var predict_from(Tape& tape, const std::vector<const TrainSample*>& batch, const Var& v_p,
                   const std::vector<std::size_t>& item_rows) {
    Var logits = tower_.forward(tape, assemble_from(tape, batch, v_p, item_rows));
    return ops::reshape(ops::sigmoid(logits), Shape{batch.size()});
  }

  /// y_hat for a batch, [n], strictly inside (0,1).
  Var forward(Tape& tape, const std::vector<const TrainSample*>& batch) {
    BatchItems items = batch_items(batch);
    Var v_p = item_feature(tape, tape.constant(std::move(items.v_s2)));
    return predict_from(tape, batch, v_p, items.rows);
  }

  std::vector<double> assemble_input(const TrainSample& s) {
    Tape tape;
    const Tensor& v = assemble(tape, {&s}).value();
    return std::vector<double>(v.data().begin(), v.data().end());
  }

  double predict(const TrainSample& s) {
    Tape tape;
    return forward(tape, {&s}).value()[0];
  }

  std::vector<double> predict_all(const std::vector<TrainSample>& samples, std::size_t chunk = 1024) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (std::size_t start = 0; start < samples.size(); start += chunk) {
      std::vector<const TrainSample*> batch;
      for (std::size_t i = start; i < std::min(samples.size(), start + chunk); ++i) batch.push_back(&samples[i]);
      Tape tape;
      const Tensor& y = forward(tape, batch).value();
      out.insert(out.end(), y.data().begin(), y.data().end());
    }
    return out;
  }

  std::vector<io::NamedTensor> to_checkpoint() const {
    std::vector<io::NamedTensor> out{
        io::meta_entry("stage", "CTR"),
        io::meta_entry("parent", encoder_.hash()),
        io::meta_entry("layout", layout()),
        io::meta_entry("debias", debias_ ? "1" : "0"),
    };
    vocab_.append_checkpoint(out);
    for (const Parameter* p : tower_.parameters()) out.push_back({p->name, p->value});
    if (debias_) debias_->append_checkpoint(out);
    return out;
  }

  std::string hash() const { return io::content_hash(io::checkpoint_bytes(to_checkpoint())); }
  void save(const std::filesystem::path& path) const { io::save_checkpoint(path, to_checkpoint()); }

 private:
  std::vector<double> visual(const Tensor& cache, std::int64_t id, const std::vector<double>* image) const {
    if (id >= 0 && static_cast<std::size_t>(id) < cache.rows()) {
      auto r = cache.row(static_cast<std::size_t>(id));
      return std::vector<double>(r.begin(), r.end());
    }
    if (!image) throw MissingArtifactError("no image for unseen id " + std::to_string(id));
    auto t = encoder::encode_images(encoder_, {static_cast<std::uint64_t>(id)}, {image});
    return std::vector<double>(t.rows.data().begin(), t.rows.data().end());
  }

  CtrConfig cfg_;
  encoder::EncoderModel encoder_;
  std::size_t dim_ = 0;
  Tensor item_features_;
  Tensor query_features_;
  FeatureVocab vocab_;
  Mlp tower_;
  std::optional<debias::DebiasModel> debias_;
};

}  // namespace vdctr::ctr
