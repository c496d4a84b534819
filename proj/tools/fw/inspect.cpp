#include <algorithm>
#include <iostream>

#include "commands.hpp"
#include "common.hpp"
#include "fw/config.hpp"

namespace fwcli {

namespace {

void print_split(const char* name, const std::vector<std::size_t>& ids, const fw::Dataset& d) {
  std::cout << "  " << name << ": " << ids.size() << " classes";
  if (!ids.empty()) {
    std::cout << " (";
    const std::size_t show = std::min<std::size_t>(ids.size(), 4);
    for (std::size_t i = 0; i < show; ++i) {
      if (i) std::cout << ", ";
      std::cout << d.class_name(ids[i]);
    }
    if (ids.size() > show) std::cout << ", ...";
    std::cout << ")";
  }
  std::cout << "\n";
}

}  // namespace

void cmd_inspect_data(const InspectArgs& args) {
  fw::RunConfig cfg = fw::RunConfig::parse_file(args.config);
  fw::DataBundle bundle = fw::build_data(cfg);
  const fw::Dataset& d = bundle.data;

  std::size_t min_ex = 0, max_ex = 0, total = 0;
  for (std::size_t c = 0; c < d.num_classes(); ++c) {
    const std::size_t n = d.examples_in(c);
    if (c == 0) min_ex = max_ex = n;
    min_ex = std::min(min_ex, n);
    max_ex = std::max(max_ex, n);
    total += n;
  }

  std::cout << "kind: " << cfg.data.kind << "\n"
            << "classes: " << d.num_classes() << " (" << total << " examples";
  if (d.num_classes() > 0) {
    std::cout << ", " << min_ex;
    if (max_ex != min_ex) std::cout << "-" << max_ex;
    std::cout << " per class";
  }
  std::cout << ")\n" << "input shape: " << fw::shape_str(d.input_shape()) << "\n" << "splits:\n";
  print_split("train", bundle.split.train, d);
  print_split("val", bundle.split.val, d);
  print_split("test", bundle.split.test, d);
}

}  // namespace fwcli
