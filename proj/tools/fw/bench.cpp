#include <iostream>

#include "json.hpp"

#include "commands.hpp"
#include "common.hpp"
#include "fw/config.hpp"
#include "fw/error.hpp"
#include "fw/trainer.hpp"

namespace fwcli {

void cmd_bench(const BenchArgs& args) {
  fw::RunConfig cfg = fw::RunConfig::parse_file(args.config);
  cfg.validate();
  if (args.episodes == 0) throw UsageError("bench needs a positive --episodes count");
  if (args.bindings.empty()) throw UsageError("bench needs at least one binding");

  constexpr std::size_t kWarmup = 20;  // excluded from every mean

  nlohmann::ordered_json out;
  out["episodes"] = args.episodes;
  out["warmup"] = kWarmup;
  out["n_query"] = cfg.train.n_query;
  out["results"] = nlohmann::ordered_json::array();

  std::cout << "binding    describe ms/task     predict ms/task      update ms/task\n";
  for (const auto& name : args.bindings) {
    fw::ModelSpec spec = cfg.model_spec();
    spec.binding = fw::binding_from_string(name);  // rejects unknown names

    fw::TimingStats st = fw::timing_bench(spec, cfg.input_shape(), cfg.train.n_query, kWarmup,
                                          args.episodes, cfg.train.seed);

    std::cout << st.name;
    for (std::size_t i = st.name.size(); i < 11; ++i) std::cout << ' ';
    std::cout << fmt_fixed(st.describe_ms, 3) << " +/- " << fmt_fixed(st.describe_sd, 3)
              << "     " << fmt_fixed(st.predict_ms, 3) << " +/- " << fmt_fixed(st.predict_sd, 3)
              << "     " << fmt_fixed(st.update_ms, 3) << " +/- " << fmt_fixed(st.update_sd, 3)
              << "\n";

    nlohmann::ordered_json row;
    row["binding"] = st.name;
    row["describe_ms"] = st.describe_ms;
    row["describe_sd"] = st.describe_sd;
    row["predict_ms"] = st.predict_ms;
    row["predict_sd"] = st.predict_sd;
    row["update_ms"] = st.update_ms;
    row["update_sd"] = st.update_sd;
    out["results"].push_back(row);
  }

  write_text_file(args.out, out.dump(2) + "\n");
  std::cout << "table: " << args.out << "\n";
}

}  // namespace fwcli
