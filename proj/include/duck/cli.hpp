#ifndef DUCK_CLI_HPP_
#define DUCK_CLI_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace duck::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInconsistent = 1;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitLimit = 3;

enum class OutputFormat { kHuman, kMachine };

struct RunConfig {
  std::vector<std::string> inputs;
  std::string subcommand;
  int max_width = 4;
  double epsilon = 1e-9;
  int max_rounds = 1000;
  std::size_t budget = 100000;
  std::uint64_t seed = 20240611;
  int workers = 0;
  OutputFormat format = OutputFormat::kHuman;
  std::vector<std::string> rules;  // rule tags; empty means the defaults
  bool with_rc = false;
  bool trace = false;
  bool dump = false;
  std::string query;                 // verify
  std::string u, v, x, y;            // chain, "lo,hi" or a single value
};

// Runs one command. `args` excludes the program name. Normal output goes to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace duck::cli

#endif  // DUCK_CLI_HPP_
