// sem-loadgen --target <url> --mode concurrent|serial --rate X --clients Y
//             --duration S --similarity P --param-length L --seed N --out report.csv

#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "sem/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Open-loop SOAP load generator"};
  sem::ScenarioConfig cfg;
  std::string target;
  std::string out;
  std::size_t requests = 0;
  const std::map<std::string, sem::LoadMode> modes{{"concurrent", sem::LoadMode::Concurrent},
                                                   {"serial", sem::LoadMode::Serial}};
  app.add_option("--target", target, "proxy or backend URL")->required();
  app.add_option("--mode", cfg.mode, "concurrent or serial")->transform(CLI::CheckedTransformer(modes));
  app.add_option("--rate", cfg.rate, "requests per second")->check(CLI::PositiveNumber);
  app.add_option("--clients", cfg.clients, "concurrent connections")->check(CLI::PositiveNumber);
  app.add_option("--duration", cfg.duration_s, "seconds")->check(CLI::PositiveNumber);
  app.add_option("--requests", requests, "fixed request count, overrides rate * duration");
  app.add_option("--similarity", cfg.similarity_pct, "percent of requests carrying the hot tuple")
      ->check(CLI::Range(0.0, 100.0));
  app.add_flag("--exact-similarity", cfg.exact_similarity, "mark exactly similarity% of requests hot");
  app.add_option("--param-length", cfg.param_length, "parameter value length")->check(CLI::PositiveNumber);
  app.add_option("--seed", cfg.seed, "generator seed");
  app.add_option("--out", out, "per-second report CSV");
  CLI11_PARSE(app, argc, argv);
  if (requests != 0) cfg.requests = requests;

  try {
    sem::RunReport report = sem::run_scenario(cfg, target);
    if (!out.empty()) sem::export_report_csv(report, out);
    std::cout << "sent " << report.sent << " ok " << report.succeeded << " failed " << report.failed << " rps "
              << sem::csv::fixed(report.achieved_rps, 1) << " mean_ms " << sem::csv::fixed(report.mean_ms, 3)
              << " p95_ms " << sem::csv::fixed(report.p95_ms, 3) << '\n';
    return report.failed == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "sem-loadgen: " << e.what() << '\n';
    return 1;
  }
}
