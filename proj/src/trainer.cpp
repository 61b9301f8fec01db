#include "wood/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "wood/error.hpp"

namespace wood {

namespace {

constexpr char kMagic[8] = {'W', 'O', 'O', 'D', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t rng_digest(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return fnv1a(os.str());
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) {
    u64(s.size());
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void raw(std::span<const char> s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int width) {
    for (int b = 0; b < width; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  double f64(const char* what) { return std::bit_cast<double>(get(8, what)); }
  std::string bytes(const char* what) {
    const std::uint64_t n = count(what, 1);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::vector<double> f64s(const char* what) {
    const std::uint64_t n = count(what, 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64(what);
    return v;
  }
  void expect(std::span<const char> tag) {
    need(tag.size(), "magic");
    if (!std::equal(tag.begin(), tag.end(), in_.begin() + static_cast<std::ptrdiff_t>(pos_))) {
      throw FormatError("not a checkpoint (bad magic)", pos_);
    }
    pos_ += tag.size();
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw FormatError(std::string("truncated while reading ") + what, pos_);
  }
  // Element count that must fit in the remaining bytes.
  std::uint64_t count(const char* what, std::size_t elem) {
    const std::size_t at = pos_;
    const std::uint64_t n = u64(what);
    if (n > (in_.size() - pos_) / elem) {
      throw FormatError(std::string("length of ") + what + " exceeds file size", at);
    }
    return n;
  }
  std::uint64_t get(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v |= std::uint64_t{in_[pos_ + static_cast<std::size_t>(b)]} << (8 * b);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (b_ind < 1) throw ConfigError("b_ind must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden widths must be positive");
  }
  if (score.matrix_kind == CostKind::General) {
    throw ConfigError("score matrix must be binary or dynamic");
  }
  score.sinkhorn.validate();
}

std::vector<MixedBatch> make_batches(std::size_t n_ind, std::size_t n_ood, const TrainConfig& cfg,
                                     std::mt19937_64& rng) {
  if (n_ind == 0) throw InputError("in-distribution training set is empty");
  if (cfg.b_ood > 0 && n_ood == 0) {
    throw ConfigError("b_ood = " + std::to_string(cfg.b_ood) + " but the OOD set is empty");
  }
  std::vector<std::size_t> order(n_ind);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<MixedBatch> batches;
  std::uniform_int_distribution<std::size_t> pick(0, n_ood == 0 ? 0 : n_ood - 1);
  for (std::size_t start = 0; start < n_ind; start += cfg.b_ind) {
    const std::size_t stop = std::min(n_ind, start + cfg.b_ind);
    MixedBatch b;
    b.ind.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                 order.begin() + static_cast<std::ptrdiff_t>(stop));
    for (std::size_t i = 0; i < cfg.b_ood; ++i) b.ood.push_back(pick(rng));
    batches.push_back(std::move(b));
  }
  return batches;
}

Trainer::Trainer(MlpModel model, TrainConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)), velocity_(model_.parameter_count(), 0.0) {
  cfg_.validate();
}

StepResult Trainer::train_step(const Matrix& ind_x, std::span<const std::size_t> ind_labels,
                               const Matrix& ood_x, std::size_t batch_id) {
  const auto n_ind = static_cast<std::size_t>(ind_x.rows());
  const auto n_ood = static_cast<std::size_t>(ood_x.rows());
  if (ind_labels.size() != n_ind) throw DimensionError("one label per InD row required");
  if (n_ind + n_ood == 0) throw InputError("empty batch");

  Matrix inputs(ind_x.rows() + ood_x.rows(), static_cast<Eigen::Index>(model_.input_dim()));
  if (n_ind > 0) inputs.topRows(ind_x.rows()) = ind_x;
  if (n_ood > 0) inputs.bottomRows(ood_x.rows()) = ood_x;
  const ForwardTrace trace = forward(model_, inputs);

  BatchSlices slices;
  slices.beta = cfg_.beta;
  for (std::size_t i = 0; i < n_ind; ++i) slices.ind.push_back({trace.prob_vector(i), ind_labels[i]});
  for (std::size_t i = 0; i < n_ood; ++i) slices.ood.push_back(trace.prob_vector(n_ind + i));

  StepResult result;
  result.loss = wood_loss(slices, cfg_.score);
  result.bounds = bound_diagnostics(slices, cfg_.score);

  Matrix grad_probs(inputs.rows(), static_cast<Eigen::Index>(model_.num_classes()));
  auto set_row = [&](std::size_t row, const std::vector<double>& g) {
    for (std::size_t c = 0; c < g.size(); ++c) {
      if (!std::isfinite(g[c])) {
        throw NumericError("non-finite loss gradient: batch " + std::to_string(batch_id) +
                           ", sample " + std::to_string(row) + ", lambda " +
                           fmt(cfg_.score.sinkhorn.lambda));
      }
      grad_probs(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = g[c];
    }
  };
  for (std::size_t i = 0; i < n_ind; ++i) {
    set_row(i, grad_ind(slices.ind[i].probs, slices.ind[i].label, n_ind));
  }
  for (std::size_t i = 0; i < n_ood; ++i) {
    set_row(n_ind + i, grad_ood(slices.ood[i], cfg_.score, n_ood, cfg_.beta));
  }

  const std::vector<double> grads = flatten_grads(backward(model_, trace, grad_probs));
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (!std::isfinite(grads[p])) {
      throw NumericError("non-finite parameter gradient " + std::to_string(p) + " in batch " +
                         std::to_string(batch_id) + ", lambda " + fmt(cfg_.score.sinkhorn.lambda));
    }
  }

  std::vector<double> params = flatten_parameters(model_);
  for (std::size_t p = 0; p < params.size(); ++p) {
    velocity_[p] = cfg_.momentum * velocity_[p] + grads[p];
    params[p] -= cfg_.lr * velocity_[p];
  }
  assign_parameters(model_, params);
  return result;
}

Matrix Normalization::apply(const Matrix& x) const {
  Matrix out = x;
  if (!offset.empty()) {
    if (offset.size() != static_cast<std::size_t>(x.cols())) throw DimensionError("normalization offset width");
    for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c).array() -= offset[static_cast<std::size_t>(c)];
  }
  if (!scale.empty()) {
    if (scale.size() != static_cast<std::size_t>(x.cols())) throw DimensionError("normalization scale width");
    for (Eigen::Index c = 0; c < x.cols(); ++c) out.col(c) *= scale[static_cast<std::size_t>(c)];
  }
  return out;
}

Normalization Normalization::standardize(const Matrix& x) {
  if (x.rows() == 0) throw InputError("cannot standardize an empty matrix");
  Normalization n;
  n.description = "standardize";
  const auto rows = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).sum() / rows;
    const double var = (x.col(c).array() - mean).square().sum() / rows;
    n.offset.push_back(mean);
    n.scale.push_back(var > 0.0 ? 1.0 / std::sqrt(var) : 1.0);
  }
  return n;
}

MlpModel Checkpoint::model() const {
  MlpModel m = init_model(layer_dims, 0);
  assign_parameters(m, parameters);
  return m;
}

FitResult fit(const InDDataset& ind, const OodDataset& ood, const TrainConfig& cfg,
              const Normalization& normalization) {
  cfg.validate();
  if (ind.size() == 0) throw InputError("in-distribution training set is empty");
  if (ood.size() > 0 && ood.dim() != ind.dim()) {
    throw DimensionError("OOD features have width " + std::to_string(ood.dim()) +
                         ", InD features " + std::to_string(ind.dim()));
  }
  const std::size_t k = ind.num_classes();
  if (k < 2) throw InputError("in-distribution data needs at least two classes");

  std::vector<std::size_t> dims{ind.dim()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(k);

  const Matrix ind_x = normalization.apply(ind.features());
  const Matrix ood_x = ood.size() > 0 ? normalization.apply(ood.features()) : Matrix(0, ind_x.cols());

  Trainer trainer(init_model(dims, cfg.seed), cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);

  FitResult out;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = make_batches(ind.size(), ood.size(), cfg, rng);
    EpochMetrics em;
    em.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<std::size_t> labels(batches[b].ind.size());
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = ind.labels()[batches[b].ind[i]];
      const StepResult step = trainer.train_step(gather_rows(ind_x, batches[b].ind), labels,
                                                 gather_rows(ood_x, batches[b].ood), b);
      em.ce_term += step.loss.ce_term;
      em.ood_term += step.loss.ood_term;
      em.alpha_m = std::max(em.alpha_m, step.bounds.alpha_m);
      em.m = std::min(em.m, step.bounds.m);
    }
    const auto nb = static_cast<double>(batches.size());
    em.ce_term /= nb;
    em.ood_term /= nb;
    em.total = em.ce_term - cfg.beta * em.ood_term;
    em.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.log.push_back(em);
  }

  Checkpoint& ck = out.checkpoint;
  ck.layer_dims = dims;
  ck.parameters = flatten_parameters(trainer.model());
  ck.normalization = normalization;
  ck.num_classes = k;
  ck.train_config = cfg;
  ck.rng_digest = rng_digest(rng);
  return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic);
  w.u32(ck.format_version);
  w.u64(ck.num_classes);
  w.u64(ck.layer_dims.size());
  for (std::size_t d : ck.layer_dims) w.u64(d);
  w.f64s(ck.parameters);
  w.bytes(ck.normalization.description);
  w.f64s(ck.normalization.offset);
  w.f64s(ck.normalization.scale);

  const TrainConfig& c = ck.train_config;
  w.f64(c.beta);
  w.u64(c.b_ind);
  w.u64(c.b_ood);
  w.u64(c.epochs);
  w.f64(c.lr);
  w.f64(c.momentum);
  w.u64(c.seed);
  w.u64(c.hidden.size());
  for (std::size_t h : c.hidden) w.u64(h);
  w.u32(static_cast<std::uint32_t>(c.score.matrix_kind));
  w.u32(static_cast<std::uint32_t>(c.score.evaluation));
  w.f64(c.score.sinkhorn.lambda);
  w.u64(c.score.sinkhorn.max_iter);
  w.f64(c.score.sinkhorn.tol);
  w.u32(static_cast<std::uint32_t>(c.score.sinkhorn.domain));
  w.u64(ck.rng_digest);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect(kMagic);
  Checkpoint ck;
  const std::size_t version_at = r.pos();
  ck.format_version = r.u32("format version");
  if (ck.format_version != Checkpoint::kFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(ck.format_version), version_at);
  }
  ck.num_classes = r.u64("class count");
  const std::uint64_t n_dims = r.u64("layer count");
  if (n_dims < 2 || n_dims > 64) throw FormatError("implausible layer count", r.pos() - 8);
  for (std::uint64_t i = 0; i < n_dims; ++i) ck.layer_dims.push_back(r.u64("layer width"));
  const std::size_t params_at = r.pos();
  ck.parameters = r.f64s("parameters");
  ck.normalization.description = r.bytes("normalization description");
  ck.normalization.offset = r.f64s("normalization offset");
  ck.normalization.scale = r.f64s("normalization scale");

  TrainConfig& c = ck.train_config;
  c.beta = r.f64("beta");
  c.b_ind = r.u64("b_ind");
  c.b_ood = r.u64("b_ood");
  c.epochs = r.u64("epochs");
  c.lr = r.f64("lr");
  c.momentum = r.f64("momentum");
  c.seed = r.u64("seed");
  const std::uint64_t n_hidden = r.u64("hidden count");
  if (n_hidden > 64) throw FormatError("implausible hidden layer count", r.pos() - 8);
  c.hidden.clear();
  for (std::uint64_t i = 0; i < n_hidden; ++i) c.hidden.push_back(r.u64("hidden width"));
  const std::size_t kind_at = r.pos();
  const std::uint32_t kind = r.u32("matrix kind");
  const std::uint32_t evaluation = r.u32("evaluation");
  if (kind > 1 || evaluation > 1) throw FormatError("unknown score configuration", kind_at);
  c.score.matrix_kind = static_cast<CostKind>(kind);
  c.score.evaluation = static_cast<ScoreEvaluation>(evaluation);
  c.score.sinkhorn.lambda = r.f64("lambda");
  c.score.sinkhorn.max_iter = r.u64("max_iter");
  c.score.sinkhorn.tol = r.f64("tol");
  const std::size_t domain_at = r.pos();
  const std::uint32_t domain = r.u32("domain");
  if (domain > 2) throw FormatError("unknown Sinkhorn domain", domain_at);
  c.score.sinkhorn.domain = static_cast<SinkhornDomain>(domain);
  ck.rng_digest = r.u64("rng digest");
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());

  if (ck.layer_dims.back() != ck.num_classes) {
    throw FormatError("output width does not match class count", params_at);
  }
  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < ck.layer_dims.size(); ++l) {
    expected += ck.layer_dims[l] * ck.layer_dims[l + 1] + ck.layer_dims[l + 1];
  }
  if (expected != ck.parameters.size()) {
    throw FormatError("parameter count does not match layer widths", params_at);
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string format_metrics_csv(std::span<const EpochMetrics> log, bool timing) {
  std::ostringstream os;
  os << "epoch,ce_term,ood_term,total,alpha_M,m,wall_ms\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << fmt(e.ce_term) << ',' << fmt(e.ood_term) << ',' << fmt(e.total) << ','
       << fmt(e.alpha_m) << ',' << fmt(e.m) << ',' << (timing ? fmt(e.wall_ms) : "0") << '\n';
  }
  return os.str();
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> log,
                       bool timing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << format_metrics_csv(log, timing);
}

Matrix predict_probs(const MlpModel& model, const Matrix& x, std::size_t chunk) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(model.num_classes()));
  for (Eigen::Index start = 0; start < x.rows(); start += static_cast<Eigen::Index>(chunk)) {
    const Eigen::Index n = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk), x.rows() - start);
    out.middleRows(start, n) = forward(model, Matrix(x.middleRows(start, n))).probs;
  }
  return out;
}

}  // namespace wood
