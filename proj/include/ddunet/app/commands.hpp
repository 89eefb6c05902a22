#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddunet/app/run_config.hpp"

namespace ddunet::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

struct ConfigSources {
  std::string config_path;
  std::vector<std::string> assignments;  // --set key=value, in order
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
};

// defaults < config file < DDUNET_* environment < --set < --out / --seed
RunConfig load_run_config(const ConfigSources& sources);

int cmd_synth(std::uint64_t seed, std::size_t size, std::size_t count, const std::filesystem::path& out_dir,
              std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
// split: train | test | all. `dataset` overrides the checkpoint's dataset when non-empty.
int cmd_evaluate(const std::filesystem::path& checkpoint, const std::string& dataset, const std::string& split,
                 const std::filesystem::path& out_dir, std::ostream& out);
int cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& subject_dir,
                const std::filesystem::path& out_dir, bool export_attention, std::ostream& out);
int cmd_gradcheck(const std::string& scope, std::size_t instances, std::uint64_t seed, std::ostream& out);
int cmd_info(const RunConfig& config, std::ostream& out);

// Full command line entry point; maps errors to exit codes.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ddunet::app
