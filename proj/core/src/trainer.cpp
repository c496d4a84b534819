#include "fw/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <map>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fw/ops.hpp"
#include "fw/tape.hpp"

namespace fw {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::uint64_t state_checksum(const FastWeightModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& nt : model.state_tensors()) {
    mix(nt.name.data(), nt.name.size());
    mix(nt.tensor.data(), nt.tensor.size() * sizeof(double));
  }
  return h;
}

struct MeanSd {
  double mean = 0.0, sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double q = 0.0;
    for (double x : xs) q += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(q / static_cast<double>(xs.size() - 1));
  }
  return r;
}

}  // namespace

AdamOptimizer::AdamOptimizer(std::vector<NamedTensor> params, AdamConfig cfg)
    : cfg_(cfg), params_(std::move(params)) {
  if (!(cfg_.alpha >= 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
      !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) || !(cfg_.epsilon > 0.0)) {
    throw ContractError("adam: invalid hyperparameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].tensor.defined()) {
      throw ContractError("adam: undefined parameter " + params_[i].name);
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (params_[j].name == params_[i].name) {
        throw ContractError("adam: duplicate parameter name " + params_[i].name);
      }
    }
    m_.emplace_back(params_[i].tensor.size(), 0.0);
    v_.emplace_back(params_[i].tensor.size(), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& nt : params_) nt.tensor.zero_grad();
}

void AdamOptimizer::step(double grad_scale) {
  ++steps_;
  const double b1c = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double b2c = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    double* p = t.data();
    const double* g = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double gj = g ? g[j] * grad_scale : 0.0;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / b1c;
      const double vhat = v[j] / b2c;
      p[j] -= cfg_.alpha * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

OptimizerState AdamOptimizer::export_state() const {
  OptimizerState st;
  st.present = true;
  st.alpha = cfg_.alpha;
  st.beta1 = cfg_.beta1;
  st.beta2 = cfg_.beta2;
  st.epsilon = cfg_.epsilon;
  st.steps = steps_;
  st.slots.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    st.slots.push_back({params_[i].name, m_[i], v_[i]});
  }
  return st;
}

void AdamOptimizer::restore_state(const OptimizerState& st) {
  if (!st.present) throw IntegrityError("adam: checkpoint carries no optimizer state");
  if (st.slots.size() != params_.size()) {
    throw IntegrityError("adam: checkpoint has " + std::to_string(st.slots.size()) +
                         " optimizer slots, model has " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& slot = st.slots[i];
    if (slot.name != params_[i].name || slot.m.size() != params_[i].tensor.size()) {
      throw IntegrityError("adam: optimizer slot mismatch at " + slot.name);
    }
    m_[i] = slot.m;
    v_[i] = slot.v;
  }
  cfg_.alpha = st.alpha;
  cfg_.beta1 = st.beta1;
  cfg_.beta2 = st.beta2;
  cfg_.epsilon = st.epsilon;
  steps_ = st.steps;
}

EpisodeMetrics train_episode(FastWeightModel& model, AdamOptimizer& opt, const Episode& ep,
                             RandomStream& noise_rs, const StepControl& ctl) {
  const auto& ms = model.spec();
  const std::size_t expected =
      static_cast<std::size_t>(ms.n_way) * static_cast<std::size_t>(ms.k_shot);
  if (ep.description.size() != expected) {
    throw ContractError("train_episode: description holds " +
                        std::to_string(ep.description.size()) + " examples, model expects " +
                        std::to_string(expected));
  }
  if (ep.queries.empty()) {
    throw ContractError("train_episode: episode has no queries");
  }

  if (ctl.zero_grad) opt.zero_grad();
  model.reset_memories();

  EpisodeMetrics out;
  out.episode = ctl.episode_index;

  Tape tape;
  Clock::time_point t0, t1, t2, t3;
  {
    TapeScope scope(tape);
    if (ctl.timings) t0 = Clock::now();
    model.describe(ep.description, noise_rs, true);
    if (ctl.timings) t1 = Clock::now();

    Tensor loss;
    std::size_t correct = 0;
    for (const auto& [x, y] : ep.queries) {
      Tensor logits = model.predict(x);
      if (argmax(logits) == static_cast<std::size_t>(y)) ++correct;
      Tensor ce = softmax_cross_entropy(logits, static_cast<std::size_t>(y));
      loss = loss.defined() ? add(loss, ce) : ce;
    }
    if (ctl.timings) t2 = Clock::now();

    out.loss = loss[0];
    out.accuracy = static_cast<double>(correct) / static_cast<double>(ep.queries.size());
    if (!std::isfinite(out.loss)) {
      throw DivergenceError("training diverged at episode " +
                            std::to_string(ctl.episode_index) + " (seed " +
                            std::to_string(ctl.run_seed) + "): loss = " +
                            std::to_string(out.loss));
    }
    backward(tape, loss);
  }
  if (ctl.apply_step) opt.step(ctl.grad_scale);
  if (ctl.timings) {
    t3 = Clock::now();
    out.t_describe_ms = ms_between(t0, t1);
    out.t_predict_ms = ms_between(t1, t2);
    out.t_update_ms = ms_between(t2, t3);
  }
  return out;
}

EvalResult evaluate(const FastWeightModel& model, const Dataset& data,
                    const std::vector<std::size_t>& classes, int n_query,
                    std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw ContractError("evaluate: zero episodes");
  if (n_query < 1) throw ContractError("evaluate: need at least one query per class");
  if (Tape::active() != nullptr) {
    throw ContractError("evaluate: must not run under an active gradient tape");
  }

  const std::uint64_t checksum_before = state_checksum(model);
  const int n_way = model.spec().n_way;
  const int k_shot = model.spec().k_shot;

  std::vector<double> accs(episodes, 0.0), losses(episodes, 0.0);

#ifdef _OPENMP
  const int n_workers = omp_get_max_threads();
#else
  const int n_workers = 1;
#endif
  std::vector<FastWeightModel> locals;
  locals.reserve(static_cast<std::size_t>(n_workers));
  for (int t = 0; t < n_workers; ++t) locals.push_back(model.clone());

  // An exception must not unwind out of the parallel loop; stash the first
  // one and rethrow it after the join.
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < episodes; ++i) {
    if (failure) continue;
    try {
#ifdef _OPENMP
      FastWeightModel& local = locals[static_cast<std::size_t>(omp_get_thread_num())];
#else
      FastWeightModel& local = locals[0];
#endif
      RandomStream rs(derive_seed(seed, "eval_episode", i));
      Episode ep = sample_episode(data, classes, n_way, k_shot, n_query, rs);
      local.reset_memories();
      local.describe(ep.description, rs, false);
      std::size_t correct = 0;
      double loss_sum = 0.0;
      for (const auto& [x, y] : ep.queries) {
        Tensor logits = local.predict(x);
        if (argmax(logits) == static_cast<std::size_t>(y)) ++correct;
        loss_sum += softmax_cross_entropy(logits, static_cast<std::size_t>(y))[0];
      }
      accs[i] = static_cast<double>(correct) / static_cast<double>(ep.queries.size());
      losses[i] = loss_sum / static_cast<double>(ep.queries.size());
    } catch (...) {
#pragma omp critical(fw_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  if (state_checksum(model) != checksum_before) {
    throw ContractError("evaluate: parameters changed during evaluation");
  }

  const MeanSd acc = mean_sd(accs);
  const MeanSd loss = mean_sd(losses);
  EvalResult r;
  r.mean_accuracy = acc.mean;
  r.ci95 = 1.96 * acc.sd / std::sqrt(static_cast<double>(episodes));
  r.mean_loss = loss.mean;
  r.episodes = episodes;
  return r;
}

Checkpoint make_checkpoint(const FastWeightModel& model, const AdamOptimizer* opt,
                           const std::vector<std::pair<std::string, const RandomStream*>>& streams,
                           std::uint64_t episode, double best_val_accuracy,
                           const std::string& config_text) {
  Checkpoint ck;
  ck.episode = episode;
  ck.best_val_accuracy = best_val_accuracy;
  for (const auto& nt : model.state_tensors()) {
    ck.tensors.push_back({nt.name, nt.tensor.detached()});
  }
  if (opt) ck.optimizer = opt->export_state();
  for (const auto& [name, rs] : streams) {
    ck.streams.push_back({name, RandomStream::kAlgorithmId, rs->seed(), rs->counter()});
  }
  ck.config_text = config_text;
  return ck;
}

void restore_checkpoint(const Checkpoint& ck, FastWeightModel& model, AdamOptimizer* opt,
                        const std::vector<std::pair<std::string, RandomStream*>>& streams) {
  auto state = model.state_tensors();
  if (state.size() != ck.tensors.size()) {
    throw IntegrityError("checkpoint: carries " + std::to_string(ck.tensors.size()) +
                         " tensors, model has " + std::to_string(state.size()));
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& src = ck.tensors[i];
    auto& dst = state[i];
    if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
      throw IntegrityError("checkpoint: tensor mismatch at '" + src.name +
                           "' vs model '" + dst.name + "'");
    }
    std::copy(src.tensor.data(), src.tensor.data() + src.tensor.size(), dst.tensor.data());
  }
  if (opt) opt->restore_state(ck.optimizer);
  for (const auto& [name, rs] : streams) {
    bool found = false;
    for (const auto& s : ck.streams) {
      if (s.name == name) {
        if (s.algorithm != RandomStream::kAlgorithmId) {
          throw IntegrityError("checkpoint: stream '" + name + "' uses algorithm " +
                               std::to_string(s.algorithm) + ", this build expects " +
                               std::to_string(RandomStream::kAlgorithmId));
        }
        rs->restore(s.seed, s.counter);
        found = true;
        break;
      }
    }
    if (!found) throw IntegrityError("checkpoint: missing stream state '" + name + "'");
  }
}

TrainRunResult train_run(FastWeightModel& model, const Dataset& data, const ClassSplit& split,
                         const TrainRunOptions& opts, const MetricsSink& sink,
                         const Checkpoint* resume) {
  const auto& ms = model.spec();
  if (split.train.size() < static_cast<std::size_t>(ms.n_way)) {
    throw SamplingError("train_run: train split has " + std::to_string(split.train.size()) +
                        " classes, episodes need " + std::to_string(ms.n_way));
  }
  if (opts.meta_batch < 1) throw ContractError("train_run: meta_batch must be >= 1");

  RandomStream sampler(derive_seed(opts.seed, "sampler"));
  RandomStream noise(derive_seed(opts.seed, "noise"));
  AdamOptimizer opt(model.parameters(), opts.adam);

  std::uint64_t start = 0;
  double best_val = -1.0;
  if (resume) {
    restore_checkpoint(*resume, model, &opt, {{"sampler", &sampler}, {"noise", &noise}});
    start = resume->episode;
    best_val = resume->best_val_accuracy;
  }

  auto snapshot = [&](std::uint64_t episode) {
    return make_checkpoint(model, &opt,
                           {{"sampler", &sampler}, {"noise", &noise}}, episode, best_val,
                           opts.config_text);
  };

  Checkpoint best = snapshot(start);

  // Guards the split discipline: a training episode must never see a class
  // from the validation or test splits.
  std::vector<char> in_train(data.num_classes(), 0);
  for (std::size_t c : split.train) in_train[c] = 1;

  const std::vector<std::size_t>& val_classes =
      split.val.size() >= static_cast<std::size_t>(ms.n_way) ? split.val : split.train;

  for (std::uint64_t e = start; e < opts.episodes; ++e) {
    Episode ep = sample_episode(data, split.train, ms.n_way, ms.k_shot, opts.n_query, sampler);
    for (std::size_t c : ep.class_map) {
      if (!in_train[c]) {
        throw ContractError("train_run: episode drew class " + std::to_string(c) +
                            " from outside the train split");
      }
    }

    // Meta-batch boundaries are fixed by the absolute episode index. A
    // resume from mid-batch restarts that batch's accumulation; checkpoints
    // written by train_run itself always land on batch boundaries.
    const std::uint64_t pos = e % opts.meta_batch;
    const bool last_of_batch = pos + 1 == opts.meta_batch || e + 1 == opts.episodes;
    StepControl ctl;
    ctl.zero_grad = pos == 0;
    ctl.apply_step = last_of_batch;
    ctl.grad_scale = 1.0 / static_cast<double>(pos + 1);
    ctl.timings = opts.timings;
    ctl.episode_index = e;
    ctl.run_seed = opts.seed;

    EpisodeMetrics m = train_episode(model, opt, ep, noise, ctl);
    if (sink) sink(m);

    if (opts.eval_every > 0 && (e + 1) % opts.eval_every == 0 && opts.eval_episodes > 0) {
      EvalResult val = evaluate(model, data, val_classes, opts.n_query, opts.eval_episodes,
                                derive_seed(opts.seed, "val_eval", e + 1));
      if (val.mean_accuracy > best_val) {
        best_val = val.mean_accuracy;
        best = snapshot(e + 1);
      }
    }
  }

  TrainRunResult res;
  res.final_state = snapshot(std::max(start, opts.episodes));
  res.best = std::move(best);
  if (!split.test.empty() && opts.eval_episodes > 0) {
    FastWeightModel best_model = model.clone();
    restore_checkpoint(res.best, best_model, nullptr, {});
    res.test = evaluate(best_model, data, split.test, opts.n_query, opts.eval_episodes,
                        derive_seed(opts.seed, "test_eval"));
  }
  return res;
}

TimingStats timing_bench(const ModelSpec& spec, const Shape& input_shape, int n_query,
                         std::size_t warmup, std::size_t measured, std::uint64_t seed) {
  if (measured == 0) throw ContractError("timing_bench: zero measured episodes");
  FastWeightModel model(spec, input_shape);
  AdamOptimizer opt(model.parameters(), {});
  RandomStream rs(derive_seed(seed, "bench_data"));
  RandomStream noise(derive_seed(seed, "bench_noise"));

  auto random_input = [&]() {
    Tensor t{input_shape};
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rs.uniform();
    return t;
  };
  auto random_episode = [&]() {
    Episode ep;
    for (int l = 0; l < spec.n_way; ++l) {
      for (int s = 0; s < spec.k_shot; ++s) ep.description.emplace_back(random_input(), l);
    }
    for (int l = 0; l < spec.n_way; ++l) {
      for (int q = 0; q < n_query; ++q) ep.queries.emplace_back(random_input(), l);
    }
    return ep;
  };

  std::vector<double> describe_ms, predict_ms, update_ms;
  describe_ms.reserve(measured);
  predict_ms.reserve(measured);
  update_ms.reserve(measured);
  for (std::size_t i = 0; i < warmup + measured; ++i) {
    Episode ep = random_episode();
    StepControl ctl;
    ctl.timings = true;
    ctl.episode_index = i;
    ctl.run_seed = seed;
    EpisodeMetrics m = train_episode(model, opt, ep, noise, ctl);
    if (i >= warmup) {
      describe_ms.push_back(m.t_describe_ms);
      predict_ms.push_back(m.t_predict_ms);
      update_ms.push_back(m.t_update_ms);
    }
  }

  const MeanSd d = mean_sd(describe_ms);
  const MeanSd p = mean_sd(predict_ms);
  const MeanSd u = mean_sd(update_ms);
  TimingStats st;
  st.name = to_string(spec.binding);
  st.episodes = measured;
  st.describe_ms = d.mean;
  st.describe_sd = d.sd;
  st.predict_ms = p.mean;
  st.predict_sd = p.sd;
  st.update_ms = u.mean;
  st.update_sd = u.sd;
  return st;
}

}  // namespace fw
