#include "segfuse/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <thread>

#include <json.hpp>

#include "segfuse/jaccard.hpp"

namespace segfuse {

using nlohmann::json;

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw Error("train config: epochs must be >= 1");
  if (cfg.batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr))
    throw Error("train config: lr must be finite and >= 0");
  if (cfg.optimizer != "adam")
    throw Error("train config: unsupported optimizer '" + cfg.optimizer + "'");
}

void write_train_log(const TrainLog& log, const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("train log: cannot write " + file.string());
  for (const EpochRecord& e : log.epochs) {
    json line{{"type", "epoch"},
              {"epoch", e.epoch},
              {"train_loss", e.train_loss},
              {"val_jaccard", e.val_jaccard},
              {"seconds", e.seconds}};
    out << line.dump() << "\n";
  }
  json summary{{"type", "summary"},
               {"best_epoch", log.best_epoch},
               {"best_val_jaccard", log.best_val_jaccard},
               {"iterations", log.iterations}};
  out << summary.dump() << "\n";
}

void Adam::init(const std::vector<ParamView<float>>& views) {
  t = 0;
  m.clear();
  v.clear();
  for (const auto& view : views) {
    m.emplace_back(view.count, 0.0f);
    v.emplace_back(view.count, 0.0f);
  }
}

void Adam::step(const std::vector<ParamView<float>>& views) {
  if (m.size() != views.size()) throw Error("adam: step before init");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
  for (size_t i = 0; i < views.size(); ++i) {
    float* w = views[i].value;
    const float* g = views[i].grad;
    float* mi = m[i].data();
    float* vi = v[i].data();
    for (size_t j = 0; j < views[i].count; ++j) {
      double gj = double(g[j]);
      double mj = beta1 * mi[j] + (1.0 - beta1) * gj;
      double vj = beta2 * vi[j] + (1.0 - beta2) * gj * gj;
      mi[j] = float(mj);
      vi[j] = float(vj);
      w[j] -= float(lr * (mj / c1) / (std::sqrt(vj / c2) + eps));
    }
  }
}

double evaluate(SegModel& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error("evaluate: no samples");
  double sum = 0.0;
  for (const Sample& s : samples) {
    SegMap pred = model.forward(s.x);
    sum += jaccard_image(mask_to_float(s.y), pred);
  }
  return sum / double(samples.size());
}

static std::vector<float> snapshot_params(const std::vector<ParamView<float>>& views) {
  std::vector<float> flat;
  for (const auto& view : views) flat.insert(flat.end(), view.value, view.value + view.count);
  return flat;
}

static void restore_params(const std::vector<ParamView<float>>& views,
                           const std::vector<float>& flat) {
  size_t off = 0;
  for (const auto& view : views) {
    std::copy(flat.begin() + std::ptrdiff_t(off), flat.begin() + std::ptrdiff_t(off + view.count),
              view.value);
    off += view.count;
  }
}

TrainLog train(SegModel& model, const std::vector<Sample>& train_set,
               const std::vector<Sample>& val_set, const TrainConfig& cfg,
               const std::filesystem::path& checkpoint_dir) {
  validate_train_config(cfg);
  if (train_set.empty()) throw Error("train: empty training set");
  if (val_set.empty()) throw Error("train: empty validation set");
  for (const Sample& s : train_set) {
    if (s.x.h != s.y.h || s.x.w != s.y.w) throw Error("train: sample input/mask shape mismatch");
    if (cfg.augment && s.x.h != s.x.w)
      throw Error("train: augmentation needs square samples, got " + std::to_string(s.x.h) + "x" +
                  std::to_string(s.x.w));
  }

  // (sample, dihedral variant) pairs; variants are materialized per iteration.
  std::vector<std::pair<int, Transform>> order;
  for (int i = 0; i < int(train_set.size()); ++i) {
    if (cfg.augment)
      for (Transform t : kAllTransforms) order.emplace_back(i, t);
    else
      order.emplace_back(i, Transform::Identity);
  }

  auto views = model.params();
  Adam adam;
  adam.lr = cfg.lr;
  adam.init(views);

  TrainLog log;
  double best = -1.0;
  std::vector<float> best_weights;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, "epoch", uint64_t(epoch)));
    rng.shuffle(order);

    double loss_sum = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      size_t batch_n = std::min(size_t(cfg.batch_size), order.size() - pos);
      for (auto& view : views) std::fill(view.grad, view.grad + view.count, 0.0f);
      for (size_t b = 0; b < batch_n; ++b) {
        auto [idx, tf] = order[pos + b];
        Stack<float> x = transform_stack(train_set[size_t(idx)].x, tf);
        Grid<float> truth = mask_to_float(transform_grid(train_set[size_t(idx)].y, tf));
        SegMap pred = model.forward(x);
        double loss = jaccard_loss(truth, pred);
        if (!std::isfinite(loss))
          throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                      ", iteration " + std::to_string(log.iterations + 1));
        loss_sum += loss;
        Grid<float> grad = jaccard_loss_grad(truth, pred);
        if (batch_n > 1)
          for (float& g : grad.v) g /= float(batch_n);
        model.backward(grad);
      }
      adam.step(views);
      ++log.iterations;
      pos += batch_n;
    }

    double val = evaluate(model, val_set);
    if (!std::isfinite(val))
      throw Error("training diverged: non-finite validation score at epoch " +
                  std::to_string(epoch));
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back({epoch, loss_sum / double(order.size()), val, seconds});
    if (val > best) {
      best = val;
      log.best_epoch = epoch;
      best_weights = snapshot_params(views);
    }
  }

  restore_params(views, best_weights);
  log.best_val_jaccard = best;
  if (!checkpoint_dir.empty()) save_checkpoint(model, checkpoint_dir);
  return log;
}

// Runs tasks over a small thread pool; rethrows the first failure by task index.
static void run_tasks(std::vector<std::function<void()>>& tasks, int workers) {
  if (workers <= 1 || tasks.size() <= 1) {
    for (auto& task : tasks) task();
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks.size());
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  int n = std::min<int>(workers, int(tasks.size()));
  threads.reserve(size_t(n));
  for (int i = 0; i < n; ++i) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

PipelineResult train_pipeline(const std::vector<Tile>& train_tiles,
                              const std::vector<Tile>& val_tiles, const PipelineConfig& cfg,
                              const std::filesystem::path& out_dir) {
  if (cfg.members.empty()) throw Error("pipeline: no member specs");
  if (train_tiles.empty() || val_tiles.empty())
    throw Error("pipeline: needs non-empty train and validation tile sets");
  const int n_channels = train_tiles[0].channels.c;
  for (size_t i = 0; i < cfg.members.size(); ++i) {
    const MemberSpec& spec = cfg.members[i];
    if (spec.channels.empty())
      throw Error("pipeline: member " + std::to_string(i) + " lists no channels");
    for (int ch : spec.channels)
      if (ch < 0 || ch >= n_channels)
        throw Error("pipeline: member " + std::to_string(i) + " wants channel " +
                    std::to_string(ch) + ", tiles have " + std::to_string(n_channels));
    if (spec.net.in_channels != int(spec.channels.size()))
      throw Error("pipeline: member " + std::to_string(i) + " net expects " +
                  std::to_string(spec.net.in_channels) + " channels but is fed " +
                  std::to_string(spec.channels.size()));
  }
  const int m = int(cfg.members.size());
  if (cfg.train_deep && cfg.deep_net.in_channels != m + n_channels)
    throw Error("pipeline: deep net expects " + std::to_string(cfg.deep_net.in_channels) +
                " input channels, members + tile channels give " +
                std::to_string(m + n_channels));

  std::filesystem::create_directories(out_dir / "models");
  std::filesystem::create_directories(out_dir / "logs");

  PipelineResult result;
  result.member_logs.resize(size_t(m));
  // member maps on the best-epoch weights, used to train the combiners
  std::vector<std::vector<SegMap>> maps_train(static_cast<size_t>(m));
  std::vector<std::vector<SegMap>> maps_val(static_cast<size_t>(m));

  std::vector<std::function<void()>> tasks;
  for (int i = 0; i < m; ++i) {
    tasks.push_back([&, i] {
      const MemberSpec& spec = cfg.members[size_t(i)];
      std::vector<Sample> tr, va;
      for (const Tile& tile : train_tiles)
        tr.push_back({select_channels(tile.channels, spec.channels), tile.mask});
      for (const Tile& tile : val_tiles)
        va.push_back({select_channels(tile.channels, spec.channels), tile.mask});
      auto model = build_unet(spec.net);
      TrainConfig tc = cfg.base_train;
      tc.seed = derive_seed(cfg.base_train.seed, "member", uint64_t(i));
      init_weights(*model, derive_seed(tc.seed, "init", 0));
      std::string name = "base" + std::to_string(i);
      result.member_logs[size_t(i)] =
          train(*model, tr, va, tc, out_dir / "models" / name);
      write_train_log(result.member_logs[size_t(i)], out_dir / "logs" / (name + ".jsonl"));
      for (const Sample& s : tr) maps_train[size_t(i)].push_back(model->forward(s.x));
      for (const Sample& s : va) maps_val[size_t(i)].push_back(model->forward(s.x));
    });
  }
  run_tasks(tasks, cfg.workers);

  for (int i = 0; i < m; ++i)
    result.manifest.members.push_back(
        {"models/base" + std::to_string(i), cfg.members[size_t(i)].channels});

  auto per_tile = [&](const std::vector<std::vector<SegMap>>& maps, size_t t) {
    std::vector<SegMap> out;
    out.reserve(size_t(m));
    for (int i = 0; i < m; ++i) out.push_back(maps[size_t(i)][t]);
    return out;
  };

  std::vector<std::function<void()>> combiner_tasks;
  if (cfg.train_linear) {
    combiner_tasks.push_back([&] {
      std::vector<Sample> tr, va;
      for (size_t t = 0; t < train_tiles.size(); ++t)
        tr.push_back({stack_maps(per_tile(maps_train, t)), train_tiles[t].mask});
      for (size_t t = 0; t < val_tiles.size(); ++t)
        va.push_back({stack_maps(per_tile(maps_val, t)), val_tiles[t].mask});
      auto model = build_linear_combiner(m);
      TrainConfig tc = cfg.combiner_train;
      tc.seed = derive_seed(cfg.combiner_train.seed, "linear", 0);
      init_weights(*model, derive_seed(tc.seed, "init", 0));
      result.linear_log = train(*model, tr, va, tc, out_dir / "models" / "linear");
      write_train_log(result.linear_log, out_dir / "logs" / "linear.jsonl");
    });
    result.manifest.linear_dir = "models/linear";
  }
  if (cfg.train_deep) {
    combiner_tasks.push_back([&] {
      std::vector<Sample> tr, va;
      for (size_t t = 0; t < train_tiles.size(); ++t)
        tr.push_back({stack_maps_with_channels(per_tile(maps_train, t), train_tiles[t].channels),
                      train_tiles[t].mask});
      for (size_t t = 0; t < val_tiles.size(); ++t)
        va.push_back({stack_maps_with_channels(per_tile(maps_val, t), val_tiles[t].channels),
                      val_tiles[t].mask});
      auto model = build_unet(cfg.deep_net);
      TrainConfig tc = cfg.combiner_train;
      tc.seed = derive_seed(cfg.combiner_train.seed, "deep", 0);
      init_weights(*model, derive_seed(tc.seed, "init", 0));
      result.deep_log = train(*model, tr, va, tc, out_dir / "models" / "deep");
      write_train_log(result.deep_log, out_dir / "logs" / "deep.jsonl");
    });
    result.manifest.deep_dir = "models/deep";
  }
  run_tasks(combiner_tasks, cfg.workers);

  save_ensemble(result.manifest, out_dir / "ensemble.json");
  return result;
}

}  // namespace segfuse
