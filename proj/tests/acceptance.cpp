// Release gate. Each numbered criterion prints exactly one [PASS]/[FAIL]
// line (criterion 6 prints [REPORT]: it is a directional summary, not a
// gate); the process exits nonzero if any gated criterion fails. Budgets
// are enforced: a criterion that overruns its time bound fails even if the
// property held.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "fw/checkpoint.hpp"
#include "fw/episodes.hpp"
#include "fw/memory.hpp"
#include "fw/model.hpp"
#include "fw/ops.hpp"
#include "fw/random.hpp"
#include "fw/tape.hpp"
#include "fw/tensor.hpp"
#include "fw/trainer.hpp"
#include "support/fd.hpp"

namespace {

using fw::Tensor;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int places = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", places, v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// ---------------------------------------------------------------------------
// 1. One-shot associative recall. Orthonormal keys must come back exactly
// (floating point exact to 1e-9), and scaling a key by c scales the readout
// at that key by c^2 when the other keys stay orthogonal to it.

Outcome criterion1() {
  constexpr std::size_t d = 32, dv = 24, trials = 100;
  fw::RandomStream rs(1001);
  double worst_recall = 0.0, worst_scaling = 0.0;

  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t m = 1 + rs.next_u64() % d;
    // Random Gaussian directions, orthonormalized; a second Gram-Schmidt
    // sweep scrubs the residual non-orthogonality.
    std::vector<Tensor> keys;
    for (std::size_t i = 0; i < m; ++i) {
      Tensor k({d});
      for (std::size_t a = 0; a < d; ++a) k.data()[a] = rs.normal();
      for (int sweep = 0; sweep < 2; ++sweep) {
        for (const Tensor& prev : keys) {
          double dot = 0.0;
          for (std::size_t a = 0; a < d; ++a) dot += k[a] * prev[a];
          for (std::size_t a = 0; a < d; ++a) k.data()[a] -= dot * prev[a];
        }
      }
      double nrm = 0.0;
      for (std::size_t a = 0; a < d; ++a) nrm += k[a] * k[a];
      nrm = std::sqrt(nrm);
      for (std::size_t a = 0; a < d; ++a) k.data()[a] /= nrm;
      keys.push_back(k);
    }
    std::vector<Tensor> vals;
    for (std::size_t i = 0; i < m; ++i) {
      Tensor v({dv});
      for (std::size_t a = 0; a < dv; ++a) v.data()[a] = rs.uniform(-2.0, 2.0);
      vals.push_back(v);
    }

    fw::LAMemory mem(d, dv, 1.0);
    for (std::size_t i = 0; i < m; ++i) mem.write(keys[i], vals[i]);
    for (std::size_t i = 0; i < m; ++i) {
      Tensor r = mem.read(keys[i]);
      for (std::size_t a = 0; a < dv; ++a) {
        worst_recall = std::max(worst_recall, std::fabs(r[a] - vals[i][a]));
      }
    }

    // Same pairs with per-key scales: reading at c*k must give c^2 * v.
    fw::LAMemory scaled(d, dv, 1.0);
    std::vector<double> cs;
    for (std::size_t i = 0; i < m; ++i) {
      const double c = rs.uniform(0.3, 3.0);
      cs.push_back(c);
      Tensor sk({d});
      for (std::size_t a = 0; a < d; ++a) sk.data()[a] = c * keys[i][a];
      scaled.write(sk, vals[i]);
    }
    for (std::size_t i = 0; i < m; ++i) {
      Tensor sk({d});
      for (std::size_t a = 0; a < d; ++a) sk.data()[a] = cs[i] * keys[i][a];
      Tensor r = scaled.read(sk);
      const double c2 = cs[i] * cs[i];
      for (std::size_t a = 0; a < dv; ++a) {
        worst_scaling = std::max(worst_scaling, std::fabs(r[a] - c2 * vals[i][a]));
      }
    }
  }

  Outcome out;
  out.pass = worst_recall < 1e-9 && worst_scaling < 1e-9;
  out.detail = "recall err " + fmt_sci(worst_recall) + ", norm-scaling err " +
               fmt_sci(worst_scaling) + " over " + std::to_string(trials) + " trials";
  return out;
}

// ---------------------------------------------------------------------------
// 2. The whole episode loss is differentiable through the write rule: the
// tape's gradients match central finite differences for every trainable
// parameter, for both write rules.

Outcome criterion2() {
  constexpr std::size_t dim = 6;
  fw::RandomStream data_rs(2002);
  auto draw = [&data_rs]() {
    Tensor x({dim});
    for (std::size_t a = 0; a < dim; ++a) x.data()[a] = data_rs.normal(0.0, 1.0);
    return x;
  };
  std::vector<fw::LabeledExample> description, queries;
  for (int c = 0; c < 3; ++c) {
    description.emplace_back(draw(), c);
    queries.emplace_back(draw(), c);
    queries.emplace_back(draw(), c);
  }

  Outcome out;
  out.pass = true;
  for (fw::Binding binding : {fw::Binding::Hebb, fw::Binding::GradMap}) {
    fw::ModelSpec spec;
    spec.encoder = fw::EncoderKind::Mlp;
    spec.binding = binding;
    spec.placement = fw::Placement::FcLayer;
    spec.n_way = 3;
    spec.k_shot = 1;
    spec.d_l = 10;
    spec.mlp_width = 8;
    spec.train_eta = true;
    spec.train_projector = true;
    spec.seed = 21;
    fw::FastWeightModel model(spec, {dim});

    // Zero-initialized biases leave many pre-activations exactly on the
    // leaky-relu kink (the mapping network's first layer sees near-zero
    // inputs, so every unit sits there). Jitter all parameters to a generic
    // point where the loss is differentiable and finite differences are
    // trustworthy.
    fw::RandomStream jitter(fw::derive_seed(21, "fd_jitter"));
    for (const auto& nt : model.parameters()) {
      for (std::size_t i = 0; i < nt.tensor.size(); ++i) {
        nt.tensor.data()[i] += jitter.uniform(-0.3, 0.3);
      }
    }

    auto loss_fn = [&]() {
      model.reset_memories();
      // A stream re-created per call keeps the label perturbation identical
      // across the analytic pass and every finite-difference probe.
      fw::RandomStream noise(fw::derive_seed(31, "acceptance_fd"));
      model.describe(description, noise, true);
      Tensor total = Tensor::scalar(0.0);
      for (const auto& [x, y] : queries) {
        total = fw::add(total, fw::softmax_cross_entropy(model.predict(x),
                                                         static_cast<std::size_t>(y)));
      }
      return total;
    };

    auto rep = fwtest::fd_check(loss_fn, model.parameters(), 1e-5);
    const bool ok = rep.max_rel_err < 1e-4;
    out.pass = out.pass && ok;
    out.detail += std::string(fw::to_string(binding)) + " max rel err " +
                  fmt_sci(rep.max_rel_err) + " over " + std::to_string(rep.checked) +
                  " parameters; ";
  }
  out.detail.resize(out.detail.size() - 2);
  return out;
}

// ---------------------------------------------------------------------------
// 3. With well-separated orthogonal classes, raw inputs as keys and one-hot
// labels as values, the untrained model classifies nearly perfectly: the
// binding alone solves the task, no optimizer step ever runs.

Outcome criterion3() {
  fw::Dataset data = fw::make_orthogonal_prototypes(32, 32, 20, 0.05, 3.0, 303);
  std::vector<std::size_t> classes(data.num_classes());
  std::iota(classes.begin(), classes.end(), std::size_t{0});

  fw::ModelSpec spec;
  spec.encoder = fw::EncoderKind::Identity;
  spec.binding = fw::Binding::Hebb;
  spec.placement = fw::Placement::SoftmaxOnlyFast;
  spec.n_way = 5;
  spec.k_shot = 1;
  spec.seed = 33;
  fw::FastWeightModel model(spec, {32});

  fw::EvalResult res = fw::evaluate(model, data, classes, 5, 1000, 3003);
  Outcome out;
  out.pass = res.mean_accuracy >= 0.99;
  out.detail = "untrained accuracy " + fmt(res.mean_accuracy) + " +/- " + fmt(res.ci95) +
               " over 1000 episodes, zero optimizer steps";
  return out;
}

// ---------------------------------------------------------------------------
// 5 and 6 share one set of training runs on confusable synthetic clusters:
// five seeds, three variants (hebb, gradmap, hebb with the write rule cut
// out of the gradient graph).

// The comparison isolates the write rules themselves: no encoder in
// front (an encoder co-adapts to whichever rule sits behind it and masks
// the difference), a moderate noise level so recall is off its ceiling,
// and a narrow fast layer so code geometry matters. Both write rules get
// their own trainable parameters (the label projector and write strength
// for hebb, the mapping network for gradmap).
struct ClusterProtocol {
  std::size_t classes = 30, dim = 16, per_class = 20;
  double separation = 0.5, sigma = 0.20;
  std::uint64_t data_seed = 7;
  std::size_t split_train = 20, split_val = 5, split_test = 5;
  std::uint64_t split_seed = 0;
  std::uint64_t episodes = 5000;
  int n_way = 5, k_shot = 1, n_query = 5;
  std::uint64_t base_seed = 1;
  std::size_t eval_episodes = 2000;
};

struct VariantRuns {
  std::string name;
  std::vector<double> accs;  // one per seed
};

fw::ModelSpec cluster_spec(const ClusterProtocol& p, fw::Binding binding, bool truncate,
                           std::uint64_t seed) {
  fw::ModelSpec spec;
  spec.encoder = fw::EncoderKind::Mlp;
  spec.binding = binding;
  spec.placement = fw::Placement::FcLayer;
  spec.truncate_through_rule = truncate;
  spec.n_way = p.n_way;
  spec.k_shot = p.k_shot;
  spec.d_l = 64;
  spec.mlp_width = 64;
  spec.train_projector = true;
  spec.train_eta = true;
  spec.seed = seed;
  return spec;
}

double run_cluster_variant(const ClusterProtocol& p, const fw::Dataset& data,
                           const fw::ClassSplit& split, fw::Binding binding, bool truncate,
                           std::uint64_t seed) {
  fw::FastWeightModel model(cluster_spec(p, binding, truncate, seed), {p.dim});
  fw::AdamOptimizer opt(model.parameters());
  fw::RandomStream sampler(fw::derive_seed(seed, "sampler"));
  fw::RandomStream noise(fw::derive_seed(seed, "noise"));
  for (std::uint64_t e = 0; e < p.episodes; ++e) {
    fw::Episode ep =
        fw::sample_episode(data, split.train, p.n_way, p.k_shot, p.n_query, sampler);
    fw::StepControl ctl;
    ctl.episode_index = e;
    ctl.run_seed = seed;
    fw::train_episode(model, opt, ep, noise, ctl);
  }
  fw::EvalResult res = fw::evaluate(model, data, split.test, p.n_query, p.eval_episodes,
                                    fw::derive_seed(seed, "acceptance_eval"));
  return res.mean_accuracy;
}

std::vector<VariantRuns> cluster_study(const ClusterProtocol& p) {
  fw::Dataset data = fw::make_cluster_prototypes(p.classes, p.dim, p.per_class,
                                                 p.separation, p.sigma, p.data_seed);
  fw::ClassSplit split = fw::split_classes(data.num_classes(), p.split_train, p.split_val,
                                           p.split_test, p.split_seed);
  std::vector<VariantRuns> runs = {{"hebb", {}}, {"gradmap", {}}, {"hebb-truncated", {}}};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const std::uint64_t seed = p.base_seed + s;
    runs[0].accs.push_back(
        run_cluster_variant(p, data, split, fw::Binding::Hebb, false, seed));
    runs[1].accs.push_back(
        run_cluster_variant(p, data, split, fw::Binding::GradMap, false, seed));
    runs[2].accs.push_back(
        run_cluster_variant(p, data, split, fw::Binding::Hebb, true, seed));
  }
  return runs;
}

void print_cluster_table(const std::vector<VariantRuns>& runs) {
  std::printf("    %-16s %-8s %-8s per-seed\n", "variant", "mean", "std");
  for (const auto& r : runs) {
    std::printf("    %-16s %-8s %-8s", r.name.c_str(), fmt(mean_of(r.accs)).c_str(),
                fmt(sample_std(r.accs)).c_str());
    for (double a : r.accs) std::printf(" %s", fmt(a).c_str());
    std::printf("\n");
  }
}

Outcome criterion5(const std::vector<VariantRuns>& runs) {
  const double mh = mean_of(runs[0].accs), mg = mean_of(runs[1].accs);
  Outcome out;
  out.pass = mh >= mg;
  out.detail = "hebb " + fmt(mh) + " +/- " + fmt(sample_std(runs[0].accs)) + " vs gradmap " +
               fmt(mg) + " +/- " + fmt(sample_std(runs[1].accs)) + " over 5 seeds";
  return out;
}

Outcome criterion6(const std::vector<VariantRuns>& runs) {
  const auto& base = runs[0].accs;
  const auto& trunc = runs[2].accs;
  // Paired per-seed margins; a one-sample t statistic on them quantifies how
  // consistently cutting the write rule out of the gradient graph hurts.
  std::vector<double> margins;
  for (std::size_t i = 0; i < base.size(); ++i) margins.push_back(base[i] - trunc[i]);
  const double m = mean_of(margins);
  const double sd = sample_std(margins);
  const double t = sd > 0.0 ? m / (sd / std::sqrt(static_cast<double>(margins.size())))
                            : (m > 0.0 ? 1e9 : 0.0);
  Outcome out;
  out.pass = true;  // directional report, not a gate
  out.detail = "baseline - truncated margin " + (m >= 0 ? std::string("+") : std::string("")) +
               fmt(m) + " (paired t=" + fmt(t, 2) + ", n=5" +
               std::string(m > 0.0 ? ", direction holds" : ", direction NOT observed") + ")";
  return out;
}

// ---------------------------------------------------------------------------
// 7. Building fast weights by outer products must be cheaper per task than
// mapping gradients through the learned rule, on the full-size conv model.

Outcome criterion7() {
  fw::ModelSpec spec;
  spec.encoder = fw::EncoderKind::CnnSmall;
  spec.placement = fw::Placement::FcLayer;
  spec.n_way = 5;
  spec.k_shot = 1;
  spec.d_l = 288;
  spec.filters = 64;
  spec.seed = 77;

  spec.binding = fw::Binding::Hebb;
  fw::TimingStats hebb = fw::timing_bench(spec, {1, 28, 28}, 5, 20, 60, 707);
  spec.binding = fw::Binding::GradMap;
  fw::TimingStats grad = fw::timing_bench(spec, {1, 28, 28}, 5, 20, 60, 707);

  Outcome out;
  out.pass = hebb.describe_ms < grad.describe_ms;
  out.detail = "describe ms/task: hebb " + fmt(hebb.describe_ms, 3) + " < gradmap " +
               fmt(grad.describe_ms, 3) + " (predict " + fmt(hebb.predict_ms, 3) + " vs " +
               fmt(grad.predict_ms, 3) + ")";
  return out;
}

// ---------------------------------------------------------------------------
// 8. Protocol invariants.

std::vector<fw::LabeledExample> shuffled(std::vector<fw::LabeledExample> xs,
                                         fw::RandomStream& rs) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    std::swap(xs[i - 1], xs[rs.next_u64() % i]);
  }
  return xs;
}

bool same_values(const Tensor& a, const Tensor& b, double tol, double* worst) {
  if (a.size() != b.size()) return false;
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::fabs(a[i] - b[i]));
  if (worst) *worst = std::max(*worst, w);
  return w <= tol;
}

Outcome criterion8() {
  Outcome out;
  out.pass = true;
  auto fail = [&out](const std::string& what) {
    out.pass = false;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += what;
  };

  // Split disjointness.
  {
    fw::ClassSplit sp = fw::split_classes(50, 30, 10, 10, 808);
    std::vector<bool> seen(50, false);
    std::size_t total = 0;
    bool dup = false;
    for (const auto* part : {&sp.train, &sp.val, &sp.test}) {
      for (std::size_t c : *part) {
        if (seen[c]) dup = true;
        seen[c] = true;
        ++total;
      }
    }
    if (dup || total != 50 || sp.train.size() != 30 || sp.val.size() != 10 ||
        sp.test.size() != 10) {
      fail("class splits overlap or lose classes");
    }
  }

  fw::Dataset data = fw::make_cluster_prototypes(22, 16, 8, 0.5, 0.2, 88);
  std::vector<std::size_t> classes(data.num_classes());
  std::iota(classes.begin(), classes.end(), std::size_t{0});
  fw::ModelSpec spec = cluster_spec(ClusterProtocol{}, fw::Binding::Hebb, false, 888);
  fw::FastWeightModel model(spec, {16});
  fw::RandomStream sampler(8081);
  fw::Episode ep1 = fw::sample_episode(data, classes, 5, 1, 5, sampler);
  fw::Episode ep2 = fw::sample_episode(data, classes, 5, 1, 5, sampler);
  fw::Episode target = fw::sample_episode(data, classes, 5, 1, 5, sampler);
  fw::RandomStream noise(8082);

  // Earlier episodes leave no trace in the fast weights: describing the same
  // description after different histories gives the same memory matrix.
  {
    fw::FastWeightModel a = model.clone(), b = model.clone();
    a.reset_memories();
    a.describe(ep1.description, noise, false);
    a.reset_memories();
    a.describe(target.description, noise, false);
    b.reset_memories();
    b.describe(ep2.description, noise, false);
    b.reset_memories();
    b.describe(target.description, noise, false);
    double worst = 0.0;
    if (!same_values(a.fc_memory()->matrix(), b.fc_memory()->matrix(), 1e-9, &worst)) {
      fail("episode history leaked into the memory (err " + fmt_sci(worst) + ")");
    }
  }

  // Description order cannot matter: the sum of outer products commutes.
  {
    fw::FastWeightModel a = model.clone(), b = model.clone();
    a.reset_memories();
    a.describe(target.description, noise, false);
    fw::RandomStream shuffle_rs(8083);
    b.reset_memories();
    b.describe(shuffled(target.description, shuffle_rs), noise, false);
    double worst = 0.0;
    bool ok = true;
    for (const auto& [x, y] : target.queries) {
      ok = same_values(a.predict(x), b.predict(x), 1e-9, &worst) && ok;
    }
    if (!ok) fail("description order changed predictions (err " + fmt_sci(worst) + ")");
  }

  // Evaluation leaves every byte of model state untouched.
  {
    std::vector<std::vector<double>> before;
    for (const auto& nt : model.state_tensors()) {
      before.emplace_back(nt.tensor.data(), nt.tensor.data() + nt.tensor.size());
    }
    (void)fw::evaluate(model, data, classes, 5, 200, 8084);
    auto after = model.state_tensors();
    for (std::size_t i = 0; i < after.size(); ++i) {
      const auto& t = after[i].tensor;
      if (!std::equal(before[i].begin(), before[i].end(), t.data())) {
        fail("evaluation moved " + after[i].name);
        break;
      }
    }
  }

  // Checkpoint bytes survive a load/save round trip unchanged, and a short
  // training run is bit-for-bit reproducible from its seed.
  {
    auto run_once = [&data](std::uint64_t seed) {
      fw::ModelSpec sp = cluster_spec(ClusterProtocol{}, fw::Binding::Hebb, false, seed);
      fw::FastWeightModel m(sp, {16});
      fw::ClassSplit split = fw::split_classes(data.num_classes(), 10, 6, 6, 11);
      fw::TrainRunOptions opts;
      opts.episodes = 60;
      opts.eval_every = 30;
      opts.eval_episodes = 20;
      opts.n_query = 3;
      opts.seed = seed;
      fw::TrainRunResult r = fw::train_run(m, data, split, opts);
      return r.final_state.to_bytes();
    };
    const auto bytes1 = run_once(909);
    const auto bytes2 = run_once(909);
    const auto bytes3 = run_once(910);
    if (bytes1 != bytes2) fail("same-seed training runs diverged");
    if (bytes1 == bytes3) fail("different seeds produced identical checkpoints");
    const auto round = fw::Checkpoint::from_bytes(bytes1).to_bytes();
    if (round != bytes1) fail("checkpoint bytes changed across a round trip");
  }

  if (out.pass) {
    out.detail =
        "splits disjoint, memories episode-local, description order free, "
        "evaluation side-effect free, checkpoints stable, runs seed-deterministic";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto selected = [&only](int id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  bool all_pass = true;
  int soft_misses = 0;

  struct Row {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
    bool gate;
  };

  // Criteria 5 and 6 share their training runs; compute lazily once.
  std::vector<VariantRuns> cluster_runs;
  auto ensure_cluster = [&cluster_runs]() -> const std::vector<VariantRuns>& {
    if (cluster_runs.empty()) cluster_runs = cluster_study(ClusterProtocol{});
    return cluster_runs;
  };

  const std::vector<Row> rows = {
      {1, "one-shot associative recall", 1.0, criterion1, true},
      {2, "gradients flow through the write rule", 30.0, criterion2, true},
      {3, "untrained binding classifies orthogonal data", 10.0, criterion3, true},
      {5, "hebb outperforms mapped gradients", 1200.0,
       [&] { return criterion5(ensure_cluster()); }, true},
      {6, "truncating the write rule hurts", 1200.0,
       [&] { return criterion6(ensure_cluster()); }, false},
      {7, "hebb writes are cheaper than gradient mapping", 300.0, criterion7, true},
      {8, "protocol invariants", 120.0, criterion8, true},
  };

  for (const auto& row : rows) {
    if (!selected(row.id)) continue;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = row.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    const bool in_budget = secs <= row.budget_s;
    const bool ok = out.pass && in_budget;
    const char* tag = row.gate ? (ok ? "[PASS]" : "[FAIL]") : (ok ? "[REPORT]" : "[MISS]");
    std::printf("criterion %d %s %s: %s (%.1fs%s)\n", row.id, tag, row.name,
                out.detail.c_str(), secs, in_budget ? "" : ", OVER BUDGET");
    if (row.id == 6 && !cluster_runs.empty()) print_cluster_table(cluster_runs);
    if (row.gate && !ok) all_pass = false;
    if (!row.gate && !ok) ++soft_misses;
    std::fflush(stdout);
  }

  if (selected(4)) {
    std::printf("criterion 4 [SKIP] full-image training lives in the acceptance_omniglot "
                "binary (needs a dataset root)\n");
  }
  if (!all_pass) {
    std::printf("acceptance: FAILED\n");
    return 1;
  }
  std::printf("acceptance: all gated criteria passed%s\n",
              soft_misses ? " (directional report missed its direction)" : "");
  return 0;
}
