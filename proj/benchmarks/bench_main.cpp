#include <benchmark/benchmark.h>

// The distro's libbenchmark_main.a ships LTO bytecode our compiler rejects,
// so the entry point lives here instead.
BENCHMARK_MAIN();
