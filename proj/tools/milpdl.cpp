// milpdl command line: MIL experiments with the progressive dropout layer.

#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "milpdl/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string params_path;
  long long seed = -1;
};

void attach_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path,
                  "key=value config file (dotted keys)");
  cmd->add_option("-s,--set", args.overrides,
                  "override a config key, e.g. --set pdl.p_max=0.3");
  cmd->add_option("-o,--out", args.output_dir, "output directory");
  cmd->add_option("--params", args.params_path, "trained parameter file");
  cmd->add_option("--seed", args.seed, "training seed (overrides train.seed)");
}

milpdl::ExperimentConfig build_config(const CommonArgs& args) {
  milpdl::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = milpdl::parse_config_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    milpdl::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  if (!args.params_path.empty()) cfg.params_path = args.params_path;
  if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIL training with attention pooling and progressive dropout"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* desc;
    int (*run)(const milpdl::ExperimentConfig&);
  };
  const Sub subs[] = {
      {"train", "train a model (fit or repeated cross-validation)",
       milpdl::cmd_train},
      {"eval", "evaluate saved parameters on a dataset", milpdl::cmd_eval},
      {"compare-dropouts", "compare PDL against baseline dropout methods",
       milpdl::cmd_compare_dropouts},
      {"scheduler-ablation", "fixed cap versus progressive schedule",
       milpdl::cmd_scheduler_ablation},
      {"sweep-interpolation", "3x3 scheduler-kind by rate-kind grid",
       milpdl::cmd_sweep_interpolation},
      {"export-attention", "per-instance attention and APBA weights",
       milpdl::cmd_export_attention},
  };

  std::vector<CommonArgs> args(std::size(subs));
  std::vector<std::function<int()>> runners(std::size(subs));
  for (std::size_t i = 0; i < std::size(subs); ++i) {
    CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].desc);
    attach_common(cmd, args[i]);
    const Sub& sub = subs[i];
    CommonArgs& a = args[i];
    cmd->callback([&sub, &a, &runners, i] {
      runners[i] = [&sub, &a] { return sub.run(build_config(a)); };
    });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    for (auto& runner : runners)
      if (runner) return runner();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
