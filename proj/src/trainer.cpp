#include "fiited/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace fiited {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

StoreConfig make_store_config(const TrainerConfig& c, std::size_t expected_keys) {
  StoreConfig s;
  s.chunks = c.chunks;
  s.dim = c.model.embedding_dim;
  s.capacity_chunks = arena_capacity(c, expected_keys);
  s.table_entries = c.table_entries != 0 ? c.table_entries : 2 * std::max<std::size_t>(expected_keys, 1);
  s.num_features = c.model.num_features;
  s.payload = true;
  s.utility_mode = c.utility_mode;
  s.gamma = c.plan.gamma;
  s.seed = c.model.seed;
  return s;
}

}  // namespace

void TrainerConfig::validate() const {
  model.validate();
  if (chunks == 0 || model.embedding_dim % chunks != 0) {
    throw std::invalid_argument("trainer: embedding_dim must be divisible by chunks");
  }
  if (batch_size == 0) throw std::invalid_argument("trainer: batch_size must be > 0");
  if (eval_every == 0) throw std::invalid_argument("trainer: eval_every must be > 0");
  if (pruning) {
    if (plan.chunks != chunks) throw std::invalid_argument("trainer: plan.chunks must equal chunks");
    plan.validate();
  }
}

std::size_t arena_capacity(const TrainerConfig& config, std::size_t expected_keys) {
  const double total = static_cast<double>(expected_keys) * static_cast<double>(config.chunks);
  if (!config.pruning) return static_cast<std::size_t>(total);
  return static_cast<std::size_t>(std::floor(config.plan.keep_budget() * total + 1e-9));
}

std::string MetricsSeries::to_csv() const {
  std::ostringstream out;
  out << "iter,loss,accuracy,live_fraction,arena_bytes\n";
  for (const auto& r : rows) {
    out << r.iter << ',' << fmt_double(r.loss) << ',' << fmt_double(r.accuracy) << ',' << fmt_double(r.live_fraction)
        << ',' << fmt_double(r.arena_bytes) << '\n';
  }
  return out.str();
}

void MetricsSeries::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics to " + path);
  out << to_csv();
}

Trainer::Trainer(TrainerConfig config, std::size_t expected_keys)
    : config_((config.validate(), std::move(config))),
      store_(make_store_config(config_, expected_keys)),
      model_(config_.model) {
  if (config_.pruning) engine_.emplace(config_.plan, config_.model.seed);
  if (config_.dimension.enabled) {
    dims_.emplace(config_.model.embedding_dim, config_.dimension.keep_ratio, config_.dimension.cold_start_iters);
  }
}

Trainer::~Trainer() {
  if (pending_.valid()) pending_.wait();
}

void Trainer::drain() {
  if (pending_.valid()) pending_.get();
}

void Trainer::apply_updates(std::vector<UtilityUpdate> updates, std::int64_t iter) {
  auto work = [this, iter, ups = std::move(updates)]() {
    for (const auto& u : ups) store_.update_utility(u.entry, u.chunk, u.accesses, u.grad_l2, iter);
  };
  if (config_.pipeline_utility_updates) {
    pending_ = std::async(std::launch::async, std::move(work));
  } else {
    work();
  }
}

StepResult Trainer::step(const Batch& batch) {
  const std::size_t F = config_.model.num_features;
  const auto D = static_cast<Eigen::Index>(config_.model.embedding_dim);
  if (batch.num_features != F) throw std::invalid_argument("batch feature count does not match the model");
  const std::size_t B = batch.size();
  StepResult result;
  result.samples = B;
  if (B == 0) return result;
  const std::int64_t iter = ++iter_;

  // Touch/fetch only read or write entry masks, addresses and the arena, so they may
  // overlap the previous batch's utility update.
  std::vector<EntryIndex> entries(B * F);
  Model::Matrix emb(static_cast<Eigen::Index>(B * F), D);
  for (std::size_t s = 0; s < B; ++s) {
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t row = s * F + f;
      entries[row] = store_.touch(batch.key(s, f));
      store_.fetch_into(entries[row], emb.row(static_cast<Eigen::Index>(row)).transpose());
    }
  }
  const auto fp = model_.forward(emb, batch.dense, batch.labels);
  const auto grads = model_.backward(fp, emb, batch.dense, batch.labels);
  result.loss = fp.loss;
  result.correct = fp.correct;
  drain();

  // Coalesce per entry; duplicates within a batch add up.
  std::unordered_map<EntryIndex, std::size_t> slot_of;
  std::vector<EntryIndex> unique;
  std::vector<double> counts;
  Model::Matrix coalesced(static_cast<Eigen::Index>(B * F), D);
  for (std::size_t row = 0; row < B * F; ++row) {
    const auto [it, inserted] = slot_of.try_emplace(entries[row], unique.size());
    if (inserted) {
      unique.push_back(entries[row]);
      counts.push_back(0.0);
      coalesced.row(static_cast<Eigen::Index>(it->second)) = grads.embeddings.row(static_cast<Eigen::Index>(row));
    } else {
      coalesced.row(static_cast<Eigen::Index>(it->second)) += grads.embeddings.row(static_cast<Eigen::Index>(row));
    }
    counts[it->second] += 1.0;
  }
  const auto n_unique = static_cast<Eigen::Index>(unique.size());

  const double emb_lr = config_.model.effective_embedding_lr();
  std::vector<UtilityUpdate> updates;
  updates.reserve(unique.size() * config_.chunks);
  for (std::size_t u = 0; u < unique.size(); ++u) {
    const EntryIndex e = unique[u];
    const auto grad_row = coalesced.row(static_cast<Eigen::Index>(u));
    for (std::size_t k = 0; k < config_.chunks; ++k) {
      const auto& cols = store_.chunk_columns(k);
      double sq = 0.0;
      for (const auto c : cols) sq += grad_row[c] * grad_row[c];
      updates.push_back({e, k, counts[u], std::sqrt(sq)});
      if (!store_.is_live(e, k)) continue;  // pruned: the parameters do not exist
      auto values = store_.chunk_values(e, k);
      for (std::size_t t = 0; t < cols.size(); ++t) values[static_cast<Eigen::Index>(t)] -= emb_lr * grad_row[cols[t]];
    }
  }
  model_.apply(grads.params, config_.model.lr);

  if (dims_ && !dims_->decided()) {
    dims_->accumulate(coalesced.topRows(n_unique));
    if (iter >= dims_->cold_start_iters()) store_.apply_column_mask(dims_->decide());
  }

  apply_updates(std::move(updates), iter);

  if (engine_ && engine_->is_boundary(iter)) {
    drain();
    if (before_event) before_event(store_, iter);
    result.event = engine_->maybe_prune(store_, iter);
  }
  return result;
}

MetricsSeries Trainer::train(SampleSource& data, std::size_t epochs, SampleSource* eval) {
  MetricsSeries series;
  Batch batch;
  double window_loss = 0.0;
  std::size_t window_correct = 0;
  std::size_t window_samples = 0;
  std::size_t window_iters = 0;
  auto flush = [&]() {
    if (window_iters == 0) return;
    const auto stats = store_.stats();
    MetricsRow row;
    row.iter = iter_;
    row.loss = window_loss / static_cast<double>(window_samples);
    row.accuracy = static_cast<double>(window_correct) / static_cast<double>(window_samples);
    const double seen_chunks = static_cast<double>(stats.seen_entries * config_.chunks);
    row.live_fraction = seen_chunks > 0 ? static_cast<double>(stats.live_chunks) / seen_chunks : 0.0;
    row.arena_bytes = stats.arena_bytes;
    series.rows.push_back(row);
    window_loss = 0.0;
    window_correct = 0;
    window_samples = 0;
    window_iters = 0;
  };
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    data.reset();
    while (data.next_batch(config_.batch_size, batch)) {
      auto r = step(batch);
      window_loss += r.loss * static_cast<double>(r.samples);
      window_correct += r.correct;
      window_samples += r.samples;
      ++window_iters;
      if (r.event) series.events.push_back(std::move(*r.event));
      if (window_iters == config_.eval_every) flush();
    }
  }
  flush();
  drain();
  if (eval != nullptr && epochs > 0) series.final_eval = evaluate(*eval);
  return series;
}

double Trainer::batch_loss(const Batch& batch) const {
  const std::size_t F = config_.model.num_features;
  Model::Matrix emb(static_cast<Eigen::Index>(batch.size() * F), static_cast<Eigen::Index>(config_.model.embedding_dim));
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t f = 0; f < F; ++f) {
      store_.fetch_into(store_.index_of(batch.key(s, f)), emb.row(static_cast<Eigen::Index>(s * F + f)).transpose());
    }
  }
  return model_.forward(emb, batch.dense, batch.labels).loss;
}

EvalResult Trainer::evaluate(SampleSource& data) {
  drain();
  data.reset();
  EvalResult r;
  Batch batch;
  const std::size_t F = config_.model.num_features;
  double loss = 0.0;
  std::size_t correct = 0;
  while (data.next_batch(1024, batch)) {
    Model::Matrix emb(static_cast<Eigen::Index>(batch.size() * F), static_cast<Eigen::Index>(config_.model.embedding_dim));
    for (std::size_t s = 0; s < batch.size(); ++s) {
      for (std::size_t f = 0; f < F; ++f) {
        store_.fetch_into(store_.index_of(batch.key(s, f)), emb.row(static_cast<Eigen::Index>(s * F + f)).transpose());
      }
    }
    const auto fp = model_.forward(emb, batch.dense, batch.labels);
    loss += fp.loss * static_cast<double>(batch.size());
    correct += fp.correct;
    r.samples += batch.size();
  }
  if (r.samples > 0) {
    r.loss = loss / static_cast<double>(r.samples);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.samples);
  }
  return r;
}

}  // namespace fiited
