#include "experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

namespace {

void print_error(int code, const std::string& kind, const std::string& msg) {
  nlohmann::json e = {{"error", {{"code", code}, {"kind", kind}, {"message", msg}}}};
  std::cerr << e.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  ym::select_blas_kernel(argv);
  using namespace ym::exp;

  CLI::App app{"Constant scalar curvature metrics on glued manifolds"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out", resolution;
  int threads = 0;
  const std::map<std::string, std::string> about = {
      {"build", "glue two models and report mesh statistics"},
      {"curvature-sweep", "eps_t norms and curvature integrals over a t grid"},
      {"sobolev-sweep", "Sobolev constant estimates over a t grid"},
      {"spectrum", "lowest a Delta eigenvalues and gap checks"},
      {"neck-eig", "neck eigenvalue lambda_t and eigenvector profile"},
      {"solve", "fixed-point solves for constant scalar curvature"},
      {"three-metrics", "the graft, swapped graft and neck metrics at one t"},
      {"mass-fit", "mass from stereographic factors and Green's functions"},
      {"report", "re-evaluate expectations of earlier runs"}};
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads (default: YAMABE_THREADS or 1)");
    sub->add_option("--resolution", resolution, "resolution tag: coarse, default, fine");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    print_error(kConfigError, "usage", e.what());
    return kConfigError;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  nlohmann::json cfg;
  {
    std::ifstream f(config_path);
    if (!f) {
      print_error(kConfigError, "config", "cannot read " + config_path);
      return kConfigError;
    }
    cfg = nlohmann::json::parse(f, nullptr, false);
    if (cfg.is_discarded()) {
      print_error(kConfigError, "config", "malformed JSON in " + config_path);
      return kConfigError;
    }
  }

  RunOptions opt;
  opt.out_dir = out_dir;
  opt.threads = resolve_threads(threads);
  if (!resolution.empty()) opt.resolution = resolution;
  try {
    const RunResult r = run(sub, cfg, opt);
    if (r.summary.contains("error")) std::cerr << nlohmann::json{{"error", r.summary["error"]}}.dump() << "\n";
    std::cout << nlohmann::json{{"experiment", sub},
                                {"passed", r.summary.value("passed", false)},
                                {"rows", r.summary.value("rows", 0)},
                                {"out", out_dir}}
                     .dump()
              << "\n";
    return r.exit_code;
  } catch (const ym::ConfigError& e) {
    print_error(kConfigError, "config", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    print_error(kNumericalFailure, "numerical", e.what());
    return kNumericalFailure;
  }
}
