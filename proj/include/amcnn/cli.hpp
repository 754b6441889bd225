#pragma once

// Command-line front end: gen-density, synth, pretrain, train, eval, predict
// and grad-check. Settings come from built-in defaults, then an optional flat
// key=value config file (--config), then --set key=value, then per-key flags.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace amcnn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct SettingInfo {
  std::string key;
  std::string default_value;
  std::string description;
};

// Every recognised config key with its default.
const std::vector<SettingInfo>& settings_table();

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace amcnn::cli
