// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "voxcycle/augment/rotation.hpp"
#include "voxcycle/io/nifti.hpp"
#include "voxcycle/random.hpp"
#include "voxcycle/train/checkpoint.hpp"
#include "voxcycle/train/config.hpp"
#include "voxcycle/train/image_pool.hpp"
#include "voxcycle/train/objective.hpp"
#include "voxcycle/train/optim.hpp"

namespace voxcycle {

// Running mean of per-volume intensity windows for one domain.
struct DomainStats {
  double lo_sum = 0;
  double hi_sum = 0;
  std::int64_t count = 0;

  void add(const NormStats& s) {
    lo_sum += s.lo;
    hi_sum += s.hi;
    ++count;
  }
  NormStats mean() const {
    if (count == 0) raise<ConfigError>("no intensity statistics recorded for this domain");
    return {lo_sum / double(count), hi_sum / double(count)};
  }
};

struct StepMetrics {
  std::int64_t step = 0;
  int epoch = 0;
  GeneratorLosses g;
  double d_a = 0;
  double d_b = 0;
  double lr = 0;
  double ms = 0;  // wall clock, excluded from comparisons

  bool same_values(const StepMetrics& o) const {
    return step == o.step && epoch == o.epoch && g.adv_a2b == o.g.adv_a2b && g.adv_b2a == o.g.adv_b2a &&
           g.cycle_a == o.g.cycle_a && g.cycle_b == o.g.cycle_b && g.identity_a == o.g.identity_a &&
           g.identity_b == o.g.identity_b && g.total == o.g.total && d_a == o.d_a && d_b == o.d_b && lr == o.lr;
  }
};

inline std::string format_metrics(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "step=%lld epoch=%d lr=%.9g g_total=%.9g adv_a2b=%.9g adv_b2a=%.9g cycle_a=%.9g cycle_b=%.9g "
                "identity_a=%.9g identity_b=%.9g d_a=%.9g d_b=%.9g ms=%.1f",
                static_cast<long long>(m.step), m.epoch, m.lr, m.g.total, m.g.adv_a2b, m.g.adv_b2a, m.g.cycle_a,
                m.g.cycle_b, m.g.identity_a, m.g.identity_b, m.d_a, m.d_b, m.ms);
  return buf;
}

enum class Direction { a2b, b2a };

inline const char* kNetNames[4] = {"G_A2B", "G_B2A", "D_A", "D_B"};

// Sorted .nii / .nii.gz files of a directory.
inline std::vector<std::filesystem::path> list_volumes(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) raise<ConfigError>("'", dir.string(), "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_nifti_path(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<Volume> load_domain(const std::filesystem::path& dir) {
  const auto files = list_volumes(dir);
  if (files.empty()) raise<ConfigError>("domain directory '", dir.string(), "' contains no .nii/.nii.gz volumes");
  std::vector<Volume> out;
  for (const auto& f : files) out.push_back(load_volume(f));
  return out;
}

namespace detail {

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite()) raise<NumericError>("non-finite values in ", what);
}

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) raise<NumericError>("non-finite ", what, " (", v, ")");
}

}  // namespace detail

// Owns the four networks, their optimizers, both image pools and the
// training data. One instance is driven by a single thread.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Volume> domain_a, std::vector<Volume> domain_b)
      : cfg_(std::move(cfg)),
        nets_(make_cycle_gan<T>(build_generator(cfg_.generator_divisor), build_discriminator(cfg_.discriminator_divisor),
                                derive_seed(cfg_.seed, {0x6e6574}))),
        pool_a_(static_cast<std::size_t>(std::max(0, cfg_.pool_size)), derive_seed(cfg_.seed, {0x706f6f6c, 0})),
        pool_b_(static_cast<std::size_t>(std::max(0, cfg_.pool_size)), derive_seed(cfg_.seed, {0x706f6f6c, 1})) {
    cfg_.validate(false);
    if (domain_a.empty() || domain_b.empty()) raise<ConfigError>("both domains need at least one training volume");
    const Shape shape = domain_a.front().data.shape();
    shape_trace(nets_.g_a2b.spec(), shape);
    shape_trace(nets_.d_a.spec(), shape);
    prepare(domain_a, data_[0], stats_[0], shape);
    prepare(domain_b, data_[1], stats_[1], shape);
    for (auto& a : adam_) a.hyper.lr = learning_rate(1);
  }

  static Trainer from_directories(const TrainConfig& cfg) {
    cfg.validate(true);
    return Trainer(cfg, load_domain(cfg.data_a), load_domain(cfg.data_b));
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  const CycleGan<T>& nets() const noexcept { return nets_; }
  CycleGan<T>& nets() noexcept { return nets_; }
  int completed_epochs() const noexcept { return epoch_; }
  std::int64_t steps_taken() const noexcept { return step_; }
  const DomainStats& stats(int domain) const { return stats_.at(static_cast<std::size_t>(domain)); }
  const ImagePool<T>& pool(int domain) const { return domain == 0 ? pool_a_ : pool_b_; }

  double learning_rate(int epoch) const {
    return lr_schedule(epoch, cfg_.lr, cfg_.epochs, cfg_.effective_constant_epochs());
  }

  // Dataset items per domain, counting on-the-fly rotated copies.
  std::size_t items(int domain) const {
    return data_[static_cast<std::size_t>(domain)].size() * (static_cast<std::size_t>(cfg_.rotations) + 1);
  }

  std::size_t steps_per_epoch() const {
    const std::size_t pairs = std::min(items(0), items(1));
    const auto b = static_cast<std::size_t>(cfg_.batch_size);
    return (pairs + b - 1) / b;
  }

  // Normalized training input for dataset item `item` of a domain. Rotated
  // copies are resampled from the raw volume and windowed with its stats.
  Tensor<T> item(int domain, std::size_t item) const {
    const auto& d = data_.at(static_cast<std::size_t>(domain));
    const std::size_t per = static_cast<std::size_t>(cfg_.rotations) + 1;
    const auto& src = d.at(item / per);
    const std::size_t k = item % per;
    if (k == 0) return src.normalized;
    std::mt19937_64 rng(derive_seed(cfg_.seed, {0x726f74, static_cast<std::uint64_t>(domain), item / per}));
    Rotation r;
    for (std::size_t i = 0; i < k; ++i) r = sample_rotation(rng, cfg_.rotation_sigma);
    return to_scalar(normalize_with(rotate_volume(src.raw, r), src.stats).data);
  }

  // Item order for an epoch; each domain is shuffled independently.
  std::vector<std::size_t> epoch_order(int epoch, int domain) const {
    std::vector<std::size_t> order(items(domain));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg_.seed, {0x73687566, static_cast<std::uint64_t>(epoch),
                                                static_cast<std::uint64_t>(domain)}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    return order;
  }

  // Generator phase: objective over the batch, then one Adam step per
  // generator. Returns batch-mean losses and the fresh fakes.
  GeneratorLosses update_generators(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b,
                                    std::vector<Tensor<T>>* fakes_a, std::vector<Tensor<T>>* fakes_b) {
    const LossWeights w{cfg_.lambda_cycle, cfg_.lambda_identity};
    const double inv = 1.0 / static_cast<double>(a.size());
    GeneratorLosses mean;
    ParamGrads<T> g_a2b, g_b2a;
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto r = generator_objective(a[i], b[i], nets_, w);
      check_generator(r);
      accumulate(g_a2b, r.grad_a2b);
      accumulate(g_b2a, r.grad_b2a);
      mean.adv_a2b += r.losses.adv_a2b * inv;
      mean.adv_b2a += r.losses.adv_b2a * inv;
      mean.cycle_a += r.losses.cycle_a * inv;
      mean.cycle_b += r.losses.cycle_b * inv;
      mean.identity_a += r.losses.identity_a * inv;
      mean.identity_b += r.losses.identity_b * inv;
      if (fakes_a) fakes_a->push_back(std::move(r.fake_a));
      if (fakes_b) fakes_b->push_back(std::move(r.fake_b));
    }
    mean.total = generator_total(mean, w);
    scale(g_a2b, inv);
    scale(g_b2a, inv);
    adam_step(nets_.g_a2b.parameters(), g_a2b, adam_[0]);
    adam_step(nets_.g_b2a.parameters(), g_b2a, adam_[1]);
    return mean;
  }

  // Discriminator phase on (real, pooled fake) pairs. Returns mean D_A, D_B loss.
  std::pair<double, double> update_discriminators(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b,
                                                  const std::vector<Tensor<T>>& pooled_a,
                                                  const std::vector<Tensor<T>>& pooled_b) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double la = 0, lb = 0;
    ParamGrads<T> ga, gb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto ra = discriminator_objective(nets_.d_a, a[i], pooled_a[i]);
      auto rb = discriminator_objective(nets_.d_b, b[i], pooled_b[i]);
      detail::check_finite(ra.loss, "D_A loss");
      detail::check_finite(rb.loss, "D_B loss");
      check_grads(ra.grads, nets_.d_a, "D_A");
      check_grads(rb.grads, nets_.d_b, "D_B");
      accumulate(ga, ra.grads);
      accumulate(gb, rb.grads);
      la += ra.loss * inv;
      lb += rb.loss * inv;
    }
    scale(ga, inv);
    scale(gb, inv);
    adam_step(nets_.d_a.parameters(), ga, adam_[2]);
    adam_step(nets_.d_b.parameters(), gb, adam_[3]);
    return {la, lb};
  }

  // Generators first, then fresh fakes through the pools, then both
  // discriminators. Losses are those computed before each update.
  StepMetrics train_step(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b) {
    if (a.empty() || a.size() != b.size()) raise<ShapeError>("train_step: need equally many A and B volumes");
    const auto t0 = std::chrono::steady_clock::now();
    StepMetrics m;
    m.lr = adam_[0].hyper.lr;
    std::vector<Tensor<T>> fakes_a, fakes_b;
    m.g = update_generators(a, b, &fakes_a, &fakes_b);
    std::vector<Tensor<T>> pooled_a, pooled_b;
    for (std::size_t i = 0; i < a.size(); ++i) {
      pooled_a.push_back(pool_a_.query(std::move(fakes_a[i])));
      pooled_b.push_back(pool_b_.query(std::move(fakes_b[i])));
    }
    std::tie(m.d_a, m.d_b) = update_discriminators(a, b, pooled_a, pooled_b);
    m.step = ++step_;
    m.epoch = epoch_ + 1;
    m.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return m;
  }

  StepMetrics train_step(const Tensor<T>& a, const Tensor<T>& b) {
    return train_step(std::vector<Tensor<T>>{a}, std::vector<Tensor<T>>{b});
  }

  void set_learning_rate(double lr) {
    for (auto& s : adam_) s.hyper.lr = lr;
  }

  // One pass over the shuffled, truncated pairing. Each step's metrics go to
  // `log` (one line each) and `on_step`.
  std::vector<StepMetrics> run_epoch(std::ostream* log = nullptr,
                                     const std::function<void(const StepMetrics&)>& on_step = {}) {
    const int epoch = epoch_ + 1;
    if (epoch > cfg_.epochs) raise<ConfigError>("training already finished ", cfg_.epochs, " epochs");
    set_learning_rate(learning_rate(epoch));
    const auto oa = epoch_order(epoch, 0), ob = epoch_order(epoch, 1);
    const std::size_t pairs = std::min(oa.size(), ob.size());
    const auto bs = static_cast<std::size_t>(cfg_.batch_size);
    std::vector<StepMetrics> out;
    for (std::size_t start = 0; start < pairs; start += bs) {
      std::vector<Tensor<T>> a, b;
      for (std::size_t i = start; i < std::min(pairs, start + bs); ++i) {
        a.push_back(item(0, oa[i]));
        b.push_back(item(1, ob[i]));
      }
      out.push_back(train_step(a, b));
      if (log) *log << format_metrics(out.back()) << '\n' << std::flush;
      if (on_step) on_step(out.back());
    }
    ++epoch_;
    return out;
  }

  // Runs the remaining epochs, writing checkpoints at the configured cadence
  // and at the end when checkpoint_dir is set.
  void train(std::ostream* log = nullptr, const std::function<void(const StepMetrics&)>& on_step = {}) {
    namespace fs = std::filesystem;
    if (!cfg_.checkpoint_dir.empty()) fs::create_directories(cfg_.checkpoint_dir);
    while (epoch_ < cfg_.epochs) {
      run_epoch(log, on_step);
      const bool cadence = cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0;
      if (!cfg_.checkpoint_dir.empty() && (cadence || epoch_ == cfg_.epochs)) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d.vxcg", epoch_);
        const auto ck = checkpoint();
        save_checkpoint(fs::path(cfg_.checkpoint_dir) / name, ck);
        if (epoch_ == cfg_.epochs) save_checkpoint(fs::path(cfg_.checkpoint_dir) / "final.vxcg", ck);
      }
    }
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.put_text("config.text", cfg_.to_text());
    ck.put_i64("config.fingerprint", static_cast<std::int64_t>(cfg_.fingerprint()));
    ck.put_i64("meta.epoch", epoch_);
    ck.put_i64("meta.step", step_);
    const Network<T>* nets[4] = {&nets_.g_a2b, &nets_.g_b2a, &nets_.d_a, &nets_.d_b};
    for (int n = 0; n < 4; ++n) {
      const std::string net = kNetNames[n];
      for (const auto& p : nets[n]->parameters()) ck.put(net + "/" + p.name, p.value);
      const auto& st = adam_[static_cast<std::size_t>(n)];
      ck.put_i64("adam/" + net + "/t", st.t);
      for (std::size_t i = 0; i < st.m.size(); ++i) {
        ck.put("adam/" + net + "/m/" + nets[n]->parameters()[i].name, st.m[i]);
        ck.put("adam/" + net + "/v/" + nets[n]->parameters()[i].name, st.v[i]);
      }
    }
    for (int d = 0; d < 2; ++d) {
      const auto& pool = d == 0 ? pool_a_ : pool_b_;
      const std::string tag = d == 0 ? "A" : "B";
      std::ostringstream rng;
      rng << pool.rng();
      ck.put_text("pool/" + tag + "/rng", rng.str());
      ck.put_i64("pool/" + tag + "/size", static_cast<std::int64_t>(pool.size()));
      for (std::size_t i = 0; i < pool.size(); ++i) ck.put("pool/" + tag + "/" + std::to_string(i), pool.buffer()[i]);
      const auto& s = stats_[static_cast<std::size_t>(d)];
      ck.put_f64s("stats/" + tag, {s.lo_sum, s.hi_sum, static_cast<double>(s.count)});
    }
    return ck;
  }

  // Loads every piece of state. A checkpoint written under a different
  // training configuration is refused unless `force` is set.
  void restore(const Checkpoint& ck, bool force = false) {
    const auto fp = static_cast<std::uint64_t>(ck.i64("config.fingerprint"));
    if (fp != cfg_.fingerprint() && !force) {
      raise<ConfigError>("config fingerprint ", std::hex, cfg_.fingerprint(), " does not match the checkpoint's ", fp,
                         std::dec, "; resume with force to override");
    }
    Network<T>* nets[4] = {&nets_.g_a2b, &nets_.g_b2a, &nets_.d_a, &nets_.d_b};
    CycleGan<T> loaded = nets_;
    Network<T>* out[4] = {&loaded.g_a2b, &loaded.g_b2a, &loaded.d_a, &loaded.d_b};
    std::array<AdamState<T>, 4> adam = adam_;
    for (int n = 0; n < 4; ++n) {
      const std::string net = kNetNames[n];
      for (auto& p : out[n]->parameters()) p.value = ck.tensor<T>(net + "/" + p.name, p.value.shape());
      auto& st = adam[static_cast<std::size_t>(n)];
      st.t = ck.i64("adam/" + net + "/t");
      st.m.clear();
      st.v.clear();
      if (st.t > 0) {
        for (const auto& p : nets[n]->parameters()) {
          st.m.push_back(ck.tensor<T>("adam/" + net + "/m/" + p.name, p.value.shape()));
          st.v.push_back(ck.tensor<T>("adam/" + net + "/v/" + p.name, p.value.shape()));
        }
      }
    }
    ImagePool<T> pools[2] = {pool_a_, pool_b_};
    std::array<DomainStats, 2> stats;
    for (int d = 0; d < 2; ++d) {
      const std::string tag = d == 0 ? "A" : "B";
      auto& pool = pools[d];
      std::istringstream rng(ck.text("pool/" + tag + "/rng"));
      rng >> pool.rng();
      if (!rng) raise<FormatError>("checkpoint pool/", tag, "/rng is not a generator state");
      const auto size = ck.i64("pool/" + tag + "/size");
      if (size < 0 || static_cast<std::size_t>(size) > pool.capacity()) {
        raise<ShapeError>("checkpoint pool ", tag, " holds ", size, " volumes, capacity is ", pool.capacity());
      }
      pool.buffer().clear();
      for (std::int64_t i = 0; i < size; ++i) {
        pool.buffer().push_back(ck.tensor<T>("pool/" + tag + "/" + std::to_string(i), data_[0].front().normalized.shape()));
      }
      const auto s = ck.f64s("stats/" + tag);
      if (s.size() != 3) raise<FormatError>("checkpoint stats/", tag, " must hold 3 values");
      stats[static_cast<std::size_t>(d)] = {s[0], s[1], static_cast<std::int64_t>(s[2])};
    }
    const auto epoch = ck.i64("meta.epoch");
    if (epoch < 0 || epoch > cfg_.epochs) raise<ConfigError>("checkpoint epoch ", epoch, " outside [0, ", cfg_.epochs, "]");
    nets_ = std::move(loaded);
    adam_ = std::move(adam);
    pool_a_ = std::move(pools[0]);
    pool_b_ = std::move(pools[1]);
    stats_ = stats;
    epoch_ = static_cast<int>(epoch);
    step_ = ck.i64("meta.step");
    set_learning_rate(learning_rate(std::min(epoch_ + 1, cfg_.epochs)));
  }

 private:
  struct Item {
    Volume raw;
    NormStats stats;
    Tensor<T> normalized;
  };

  static Tensor<T> to_scalar(const Tensor<float>& t) {
    if constexpr (std::is_same_v<T, float>) return t;
    else return t.template cast<T>();
  }

  void prepare(std::vector<Volume>& volumes, std::vector<Item>& items, DomainStats& stats, const Shape& shape) {
    for (auto& v : volumes) {
      if (v.data.shape() != shape) {
        raise<ConfigError>("volume '", v.source, "' has shape ", shape_string(v.data.shape()), ", expected ",
                           shape_string(shape), " like the first volume; crop or pad to a common grid");
      }
      auto n = normalize_intensity(v, cfg_.percentile);
      stats.add(*n.norm);
      items.push_back({std::move(v), *n.norm, to_scalar(n.data)});
    }
  }

  static void accumulate(ParamGrads<T>& into, ParamGrads<T>& g) {
    if (into.empty()) {
      into = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
  }

  static void scale(ParamGrads<T>& g, double s) {
    if (s == 1.0) return;
    for (auto& t : g) t *= static_cast<T>(s);
  }

  void check_grads(const ParamGrads<T>& g, const Network<T>& net, const char* name) const {
    for (std::size_t i = 0; i < g.size(); ++i) {
      detail::check_finite(g[i], std::string(name) + " gradient " + net.parameters()[i].name);
    }
  }

  void check_generator(const GeneratorResult<T>& r) const {
    detail::check_finite(r.losses.adv_a2b, "adversarial loss A->B");
    detail::check_finite(r.losses.adv_b2a, "adversarial loss B->A");
    detail::check_finite(r.losses.cycle_a, "cycle loss A");
    detail::check_finite(r.losses.cycle_b, "cycle loss B");
    detail::check_finite(r.losses.identity_a, "identity loss A");
    detail::check_finite(r.losses.identity_b, "identity loss B");
    detail::check_finite(r.fake_b, "fake B (G_A2B output)");
    detail::check_finite(r.fake_a, "fake A (G_B2A output)");
    check_grads(r.grad_a2b, nets_.g_a2b, "G_A2B");
    check_grads(r.grad_b2a, nets_.g_b2a, "G_B2A");
  }

  TrainConfig cfg_;
  CycleGan<T> nets_;
  std::array<AdamState<T>, 4> adam_;
  ImagePool<T> pool_a_;
  ImagePool<T> pool_b_;
  std::array<std::vector<Item>, 2> data_;
  std::array<DomainStats, 2> stats_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
};

// Generator for one direction, rebuilt from a checkpoint's own config.
template <typename T>
Network<T> load_generator(const Checkpoint& ck, Direction dir) {
  const auto cfg = parse_config(ck.text("config.text"));
  Network<T> net(build_generator(cfg.generator_divisor));
  const std::string prefix = dir == Direction::a2b ? "G_A2B/" : "G_B2A/";
  for (auto& p : net.parameters()) p.value = ck.tensor<T>(prefix + p.name, p.value.shape());
  return net;
}

// Window the input with its own percentile stats, run the generator, and map
// the result back with the target domain's running stats.
inline Volume translate(const Checkpoint& ck, const Volume& input, Direction dir) {
  const auto cfg = parse_config(ck.text("config.text"));
  const auto s = ck.f64s(dir == Direction::a2b ? "stats/B" : "stats/A");
  if (s.size() != 3 || s[2] < 1) raise<ConfigError>("checkpoint carries no target-domain intensity statistics");
  const NormStats target{s[0] / s[2], s[1] / s[2]};
  const auto normalized = normalize_intensity(input, cfg.percentile);
  Volume out = input;
  if (cfg.precision == "float64") {
    out.data = load_generator<double>(ck, dir).forward(normalized.data.cast<double>()).cast<float>();
  } else {
    out.data = load_generator<float>(ck, dir).forward(normalized.data);
  }
  out.norm = target;
  return denormalize(out);
}

}  // namespace voxcycle
