/*
 * Copyright 2026 The FDSP Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fdsp/config.hpp"
#include "fdsp/datagen.hpp"
#include "fdsp/dsp.hpp"
#include "fdsp/encoder.hpp"
#include "fdsp/errors.hpp"
#include "fdsp/fed/aggregate.hpp"
#include "fdsp/fed/message.hpp"
#include "fdsp/fed/partition.hpp"
#include "fdsp/fed/round.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/promptgan.hpp"

namespace fdsp {

/// Frozen backbone plus the image embeddings of one dataset. Built once and
/// shared read-only by every client, stage and fold.
struct Runtime {
  FrozenEncoders enc;
  TokenTable table;
  Tensor image_emb;  // [N x d], row i embeds sample i

  static Runtime make(const ExperimentConfig& cfg, const data::DomainDataset& ds) {
    Runtime rt{FrozenEncoders(cfg.encoders(ds.feature_dim), cfg.backbone_seed),
               TokenTable(cfg.d_tok, cfg.backbone_seed, cfg.token_scale), Tensor{}};
    rt.image_emb = rt.enc.encode_image(ds.features);
    return rt;
  }

  /// Same backbone applied to another dataset with the same feature width.
  [[nodiscard]] Runtime rebind(const data::DomainDataset& ds) const {
    if (ds.feature_dim != enc.dims().feature_dim) {
      throw dimension_error("dataset '" + ds.name + "' has feature_dim " + std::to_string(ds.feature_dim) +
                            ", backbone expects " + std::to_string(enc.dims().feature_dim));
    }
    Runtime rt{enc, table, enc.encode_image(ds.features)};
    return rt;
  }

  [[nodiscard]] std::uint64_t checksum() const {
    return fnv1a64{}.update_u64(enc.checksum()).update_u64(table.checksum()).digest();
  }
};

/// Dataset named by the config: loaded from disk, or generated with seed.data.
inline data::DomainDataset make_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) return data::import_embeddings(data::detail::manifest_of(cfg.dataset_path));
  auto spec = cfg.synthetic;
  spec.seed = cfg.data_seed;
  return data::gen_dataset(spec);
}

struct BatchEvent {
  int stage = 1;
  std::uint32_t round = 0;
  std::uint32_t client = 0;
  std::span<const std::size_t> samples;  // dataset row ids (lineage tags)
};

struct ClientLoss {
  std::uint32_t client = 0;
  std::size_t steps = 0;
  double loss = 0.0;    // stage 1: mean cross-entropy
  double d_loss = 0.0;  // stage 2
  double g_loss = 0.0;
};

struct RoundEvent {
  int stage = 1;
  std::uint32_t round = 0;  // stage-local, 1-based
  std::span<const ClientLoss> clients;
  const fed::Entries* distributed = nullptr;
  const fed::AggregationRecord* record = nullptr;
  double prompt_norm = 0.0;  // L2 over distributed v and u/*
  double gan_norm = 0.0;     // L2 over distributed G/* and D/*
};

/// Observers are called from the driving thread, in round order and client order.
struct TrainingHooks {
  std::function<void(const BatchEvent&)> on_batch;
  std::function<void(const RoundEvent&)> on_round;
};

struct RunOptions {
  std::size_t threads = 1;  // client parallelism; results do not depend on it
  TrainingHooks hooks;
};

/// Result of both stages: the aggregated prompts and generator as last distributed.
struct TrainedModel {
  prompt_mode mode = prompt_mode::dsp;
  DspParams prompts;             // v and u/<source> (csp: v only; hdp: unused)
  std::optional<GanParams> gan;  // absent in wgm mode
  std::vector<std::uint32_t> source_domains;
  std::size_t stage1_rounds = 0;
  std::size_t stage2_rounds = 0;
  std::size_t prompt_updates = 0;  // optimizer steps taken on prompt tensors

  /// Server checkpoint: every distributed tensor in one message.
  [[nodiscard]] fed::ParamMessage checkpoint(std::uint32_t round) const {
    fed::ParamMessage msg;
    msg.sender = server_id;
    msg.round = round;
    if (trains_prompts(mode)) {
      auto p = prompts;
      for (auto& [name, t] : p.named()) msg.entries.push_back({name, Tensor(t->rows, t->cols, t->data)});
    }
    if (gan) {
      auto g = *gan;
      for (auto& [name, t] : g.named()) msg.entries.push_back({name, Tensor(t->rows, t->cols, t->data)});
    }
    msg.sort_entries();
    return msg;
  }

  static TrainedModel from_checkpoint(const fed::ParamMessage& msg, const ExperimentConfig& cfg);

  static constexpr std::uint32_t server_id = 0xFFFFFFFFu;
};

namespace detail {

inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a, std::uint64_t b = 0) {
  return fnv1a64{}.update_u64(seed).update(tag).update_u64(a).update_u64(b).digest();
}

/// Shuffled mini-batches over a fixed row set, served in half-epoch units.
/// A half is the first (or second) half of an epoch's batches; a one-batch
/// epoch is split by rows so both halves are non-empty.
class batch_schedule {
 public:
  batch_schedule() = default;
  batch_schedule(std::vector<std::size_t> rows, std::size_t batch_size, std::uint64_t seed)
      : rows_(std::move(rows)), bs_(std::min(batch_size, std::max<std::size_t>(rows_.size(), 1))), rng_(seed) {
    if (rows_.empty()) throw contract_error("client has no samples");
  }

  std::vector<std::vector<std::size_t>> take(std::size_t halves) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t h = 0; h < halves; ++h) {
      if (pending_.empty()) refill();
      for (auto& b : pending_.front()) out.push_back(std::move(b));
      pending_.pop_front();
    }
    return out;
  }

 private:
  void refill() {
    auto order = rows_;
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += bs_) {
      batches.emplace_back(order.begin() + std::ptrdiff_t(i),
                           order.begin() + std::ptrdiff_t(std::min(order.size(), i + bs_)));
    }
    if (batches.size() == 1 && order.size() > 1) {
      const auto mid = std::ptrdiff_t((order.size() + 1) / 2);
      batches = {std::vector<std::size_t>(order.begin(), order.begin() + mid),
                 std::vector<std::size_t>(order.begin() + mid, order.end())};
    }
    const std::size_t first = (batches.size() + 1) / 2;
    pending_.emplace_back(batches.begin(), batches.begin() + std::ptrdiff_t(first));
    pending_.emplace_back(batches.begin() + std::ptrdiff_t(first), batches.end());
  }

  std::vector<std::size_t> rows_;
  std::size_t bs_ = 1;
  std::mt19937_64 rng_;
  std::deque<std::vector<std::vector<std::size_t>>> pending_;
};

inline double l2_norm(const fed::Entries& e, bool prompts) {
  double s = 0.0;
  for (const auto& [name, t] : e) {
    if (is_prompt_param_name(name) != prompts) continue;
    for (float x : t.data) s += double(x) * x;
  }
  return std::sqrt(s);
}

inline void copy_into(const fed::Entries& from, const std::string& name, Tensor& to) {
  auto it = from.find(name);
  if (it == from.end()) return;
  if (!it->second.same_shape(to)) {
    throw protocol_error("distributed '" + name + "' has shape " + it->second.shape() + ", local is " + to.shape());
  }
  to.data = it->second.data;
}

/// Shared per-client bookkeeping: rows, schedule, lineage guard and batch log.
struct client_base {
  std::uint32_t client_id = 0;
  std::vector<std::size_t> samples;
  batch_schedule schedule;
  std::size_t halves_per_round = 2;
  const data::DomainDataset* ds = nullptr;
  std::optional<std::uint32_t> forbidden_domain;
  std::vector<std::vector<std::size_t>> round_batches;
  ClientLoss stats;

  [[nodiscard]] std::uint32_t id() const { return client_id; }

  std::vector<std::vector<std::size_t>> next_batches() {
    round_batches = schedule.take(halves_per_round);
    for (const auto& b : round_batches) {
      for (auto i : b) {
        if (forbidden_domain && ds->domain_of[i] == *forbidden_domain) {
          throw contract_error("sample " + std::to_string(i) + " of the held-out domain reached client " +
                               std::to_string(client_id));
        }
      }
    }
    stats = ClientLoss{client_id};
    return round_batches;
  }
};

struct prompt_client : client_base {
  const Runtime* rt = nullptr;
  const Tensor* class_tokens = nullptr;
  double tau = 0.01;
  DspParams params;
  DspOptimizers opt;

  fed::ParamMessage train(std::uint32_t round) {
    const auto batches = next_batches();
    double total = 0.0;
    for (const auto& rows : batches) {
      DspBatch b{Tensor(rows.size(), rt->image_emb.cols), {}, {}};
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(rt->image_emb.row(rows[r]).begin(), b.image_emb.cols, b.image_emb.row(r).begin());
        b.labels.push_back(ds->label_of[rows[r]]);
        b.domains.push_back(ds->domain_of[rows[r]]);
      }
      total += dsp_train_step(params, b, rt->enc, *class_tokens, tau, opt);
      ++stats.steps;
    }
    stats.loss = stats.steps ? total / double(stats.steps) : 0.0;
    return fed::make_message(client_id, round, params.named());
  }

  void receive(const fed::Entries& e) {
    for (auto& [name, t] : params.named()) copy_into(e, name, *t);
  }
};

struct gan_client : client_base {
  const Runtime* rt = nullptr;
  GanParams gan;
  GanOptimizers opt;
  gan_step_options options;
  RealPromptBank bank;
  std::map<std::size_t, std::size_t> bank_row;  // sample id -> bank row
  std::mt19937_64 noise;

  fed::ParamMessage train(std::uint32_t round) {
    const auto batches = next_batches();
    double d_total = 0.0, g_total = 0.0;
    for (const auto& ids : batches) {
      std::vector<std::size_t> rows;
      rows.reserve(ids.size());
      for (auto i : ids) rows.push_back(bank_row.at(i));
      const auto b = sample_gan_batch(bank, rows, gan.dims.z_dim, noise);
      const auto r = gan_train_step(gan, b, opt, options);
      d_total += r.d_loss;
      g_total += r.g_loss;
      ++stats.steps;
    }
    if (stats.steps) {
      stats.d_loss = d_total / double(stats.steps);
      stats.g_loss = g_total / double(stats.steps);
    }
    return fed::make_message(client_id, round, gan.named());
  }

  void receive(const fed::Entries& e) {
    for (auto& [name, t] : gan.named()) copy_into(e, name, *t);
  }
};

template <class Client>
void emit_round(const RunOptions& opts, int stage, const fed::RoundResult& r, std::span<Client> clients,
                const fed::AggHistory& server) {
  const auto& hooks = opts.hooks;
  if (hooks.on_batch) {
    for (const auto& c : clients) {
      for (const auto& b : c.round_batches) hooks.on_batch(BatchEvent{stage, r.round, c.client_id, b});
    }
  }
  if (hooks.on_round) {
    std::vector<ClientLoss> losses;
    for (const auto& c : clients) losses.push_back(c.stats);
    RoundEvent ev{stage, r.round, losses, &r.distributed, &server.log().back(),
                  l2_norm(r.distributed, true), l2_norm(r.distributed, false)};
    hooks.on_round(ev);
  }
}

}  // namespace detail

/// Two-stage federated training on the given source domains.
///
/// Stage 1 tunes v and u/<domain> on each client and aggregates them with
/// momentum. Stage 2 trains the conditional GAN against the per-domain contexts
/// distributed at the end of stage 1, aggregated with plain FedAvg.
/// `held_out`, when set, is a domain no client batch may touch.
inline TrainedModel train_model(const ExperimentConfig& cfg, const data::DomainDataset& ds, const Runtime& rt,
                                std::span<const std::uint32_t> sources,
                                std::optional<std::uint32_t> held_out = std::nullopt, const RunOptions& opts = {}) {
  cfg.validate();
  if (sources.empty()) throw contract_error("training needs at least one source domain");
  if (held_out && std::find(sources.begin(), sources.end(), *held_out) != sources.end()) {
    throw contract_error("held-out domain is also a source domain");
  }
  const auto part = fed::partition_domains(sources.size(), cfg.n_clients, cfg.overlap_ratio, cfg.data_seed);
  const Tensor class_tokens = rt.table.class_tokens(ds.classes);
  const std::size_t halves = static_cast<std::size_t>(std::llround(cfg.epochs_per_round * 2.0));

  TrainedModel model;
  model.mode = cfg.mode;
  model.source_domains.assign(sources.begin(), sources.end());
  std::sort(model.source_domains.begin(), model.source_domains.end());

  if (trains_prompts(cfg.mode)) {
    std::mt19937_64 init_rng(detail::stream_seed(cfg.model_seed, "prompts", 0));
    model.prompts = DspParams::make(cfg.m1, cfg.effective_m2(), cfg.d_tok, model.source_domains, init_rng,
                                    cfg.prompt_init_std);
  }

  auto client_rows = [&](std::size_t c) {
    std::vector<std::size_t> rows;
    for (auto pos : part.assignments[c]) {
      const auto dom = sources[pos];
      for (auto i : ds.indices_of(dom)) rows.push_back(i);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  auto init_base = [&](detail::client_base& b, std::size_t c, int stage) {
    b.client_id = static_cast<std::uint32_t>(c);
    b.samples = client_rows(c);
    b.schedule = detail::batch_schedule(b.samples, cfg.batch_size,
                                        detail::stream_seed(cfg.noise_seed, "batches", std::uint64_t(stage), c));
    b.halves_per_round = halves;
    b.ds = &ds;
    b.forbidden_domain = held_out;
  };
  std::map<std::uint32_t, double> weights;
  for (std::size_t c = 0; c < cfg.n_clients; ++c) weights[std::uint32_t(c)] = double(client_rows(c).size());
  const auto* w = cfg.sample_weighted ? &weights : nullptr;

  // Stage 1.
  fed::Entries prompt_state;
  if (trains_prompts(cfg.mode)) {
    std::vector<detail::prompt_client> clients;
    for (std::size_t c = 0; c < cfg.n_clients; ++c) {
      detail::prompt_client pc;
      init_base(pc, c, 1);
      pc.rt = &rt;
      pc.class_tokens = &class_tokens;
      pc.tau = cfg.tau;
      pc.params.m1 = model.prompts.m1;
      pc.params.m2 = model.prompts.m2;
      pc.params.d_tok = model.prompts.d_tok;
      pc.params.v = model.prompts.v;
      for (auto pos : part.assignments[c]) {
        if (pc.params.m2 > 0) pc.params.u.emplace(sources[pos], model.prompts.domain_rows(sources[pos]));
      }
      pc.opt.settings = cfg.prompt_opt;
      clients.push_back(std::move(pc));
    }
    fed::AggHistory server(cfg.alpha, cfg.rule);
    const std::size_t rounds = cfg.rounds(cfg.epochs);
    for (std::size_t k = 1; k <= rounds; ++k) {
      auto r = fed::run_round(std::uint32_t(k), std::span(clients), server, opts.threads, w);
      detail::emit_round(opts, 1, r, std::span(clients), server);
      prompt_state = std::move(r.distributed);
    }
    model.stage1_rounds = rounds;
    for (const auto& c : clients) model.prompt_updates += c.opt.states.empty() ? 0 : c.opt.states.at("v").step_count;
    for (auto& [name, t] : model.prompts.named()) detail::copy_into(prompt_state, name, *t);
  }

  // Stage 2.
  if (trains_generator(cfg.mode)) {
    const gan_dims dims{cfg.z_dim, cfg.d, cfg.context_rows(), cfg.d_tok, cfg.gan_hidden};
    const auto init = GanParams::make(dims, detail::stream_seed(cfg.model_seed, "gan", 0), cfg.gan_output_gain);
    const Tensor fixed = cfg.mode == prompt_mode::hdp ? hand_crafted_context(rt.table) : Tensor{};

    std::vector<detail::gan_client> clients;
    for (std::size_t c = 0; c < cfg.n_clients; ++c) {
      detail::gan_client gc;
      init_base(gc, c, 2);
      gc.rt = &rt;
      gc.gan = init;
      gc.opt = GanOptimizers{basic_optimizer_state<float>(cfg.gan_opt), basic_optimizer_state<float>(cfg.gan_opt)};
      gc.options = gan_step_options{cfg.g_loss, cfg.d_steps};
      gc.noise.seed(detail::stream_seed(cfg.noise_seed, "gan-noise", c));
      for (auto pos : part.assignments[c]) {
        const auto dom = sources[pos];
        gc.bank.add_context(dom, cfg.mode == prompt_mode::hdp ? fixed : model.prompts.context(dom));
      }
      gc.bank.embeddings = Tensor(gc.samples.size(), rt.image_emb.cols);
      for (std::size_t j = 0; j < gc.samples.size(); ++j) {
        const auto i = gc.samples[j];
        std::copy_n(rt.image_emb.row(i).begin(), rt.image_emb.cols, gc.bank.embeddings.row(j).begin());
        gc.bank.domains.push_back(ds.domain_of[i]);
        gc.bank_row[i] = j;
      }
      clients.push_back(std::move(gc));
    }
    fed::AggHistory server(cfg.alpha, cfg.rule);
    const std::size_t rounds = cfg.rounds(cfg.gan_epochs);
    fed::Entries gan_state;
    for (std::size_t k = 1; k <= rounds; ++k) {
      auto r = fed::run_round(std::uint32_t(k), std::span(clients), server, opts.threads, w);
      detail::emit_round(opts, 2, r, std::span(clients), server);
      gan_state = std::move(r.distributed);
    }
    model.stage2_rounds = rounds;
    model.gan = init;
    for (auto& [name, t] : model.gan->named()) detail::copy_into(gan_state, name, *t);
  }
  return model;
}

/// Trains on every domain of the dataset except cfg.target_domain (if named).
inline TrainedModel train_model(const ExperimentConfig& cfg, const data::DomainDataset& ds, const Runtime& rt,
                                const RunOptions& opts = {}) {
  std::optional<std::uint32_t> held_out;
  if (!cfg.target_domain.empty()) held_out = ds.domain_by_name(cfg.target_domain);
  std::vector<std::uint32_t> sources;
  for (const auto& d : ds.domains)
    if (!held_out || d.id != *held_out) sources.push_back(d.id);
  return train_model(cfg, ds, rt, sources, held_out, opts);
}

inline TrainedModel TrainedModel::from_checkpoint(const fed::ParamMessage& msg, const ExperimentConfig& cfg) {
  TrainedModel m;
  m.mode = cfg.mode;
  m.prompts.m1 = cfg.m1;
  m.prompts.m2 = cfg.effective_m2();
  m.prompts.d_tok = cfg.d_tok;
  auto take = [&msg](const std::string& name, std::size_t rows, std::size_t cols) {
    const Tensor* t = msg.find(name);
    if (t == nullptr) throw schema_error("checkpoint lacks '" + name + "'");
    if (t->rows != rows || t->cols != cols) {
      throw dimension_error("checkpoint '" + name + "' is " + t->shape() + ", config expects " +
                            Tensor::shape_string(rows, cols));
    }
    return *t;
  };
  if (trains_prompts(cfg.mode)) {
    m.prompts.v = take("v", cfg.m1, cfg.d_tok);
    for (const auto& e : msg.entries) {
      if (!e.name.starts_with("u/")) continue;
      const auto id = static_cast<std::uint32_t>(std::stoul(e.name.substr(2)));
      m.prompts.u.emplace(id, take(e.name, m.prompts.m2, cfg.d_tok));
      m.source_domains.push_back(id);
    }
  }
  if (trains_generator(cfg.mode)) {
    const gan_dims dims{cfg.z_dim, cfg.d, cfg.context_rows(), cfg.d_tok, cfg.gan_hidden};
    m.gan = GanParams::make(dims, 0);
    for (auto& [name, t] : m.gan->named()) *t = take(name, t->rows, t->cols);
  }
  return m;
}

}  // namespace fdsp
