#include "common.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

#include "fw/error.hpp"
#include "fw/model.hpp"

namespace fs = std::filesystem;

namespace fwcli {

void claim_out_dir(const std::string& dir, bool force) {
  if (dir.empty()) throw UsageError("no output directory given (set train.out or pass --out)");
  if (fs::exists(dir) && !force) {
    throw UsageError("output directory '" + dir + "' already exists (pass --force to reuse it)");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw fw::IoError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw fw::IoError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw fw::IoError("write failed for " + path);
}

std::string fmt_fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

fw::TrainRunResult run_training(const fw::RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();

  // Materialize the dataset before touching the output directory, so a
  // missing or corrupt dataset leaves no partial artifacts behind.
  fw::DataBundle bundle = fw::build_data(cfg);

  claim_out_dir(out_dir, /*force=*/true);  // caller already arbitrated --force

  fw::FastWeightModel model(cfg.model_spec(), bundle.data.input_shape());
  fw::TrainRunOptions opts = cfg.train_options();
  {
    fw::RunConfig embedded = cfg;
    embedded.train.out.clear();
    opts.config_text = embedded.canonical_text();
  }

  const std::string metrics_path = out_dir + "/metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw fw::IoError("cannot open " + metrics_path + " for writing");

  auto sink = [&](const fw::EpisodeMetrics& em) {
    nlohmann::ordered_json j;
    j["episode"] = em.episode;
    j["loss"] = em.loss;
    j["acc"] = em.accuracy;
    j["t_describe_ms"] = em.t_describe_ms;
    j["t_predict_ms"] = em.t_predict_ms;
    j["t_update_ms"] = em.t_update_ms;
    metrics << j.dump() << '\n';
  };

  fw::TrainRunResult result = fw::train_run(model, bundle.data, bundle.split, opts, sink);

  metrics.flush();
  if (!metrics) throw fw::IoError("write failed for " + metrics_path);

  result.best.save(out_dir + "/best.ckpt");
  result.final_state.save(out_dir + "/final.ckpt");

  fw::RunConfig resolved = cfg;
  resolved.train.out = out_dir;
  write_text_file(out_dir + "/resolved.cfg", resolved.canonical_text());

  return result;
}

}  // namespace fwcli
