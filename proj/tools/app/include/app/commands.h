#ifndef APP_COMMANDS_H_
#define APP_COMMANDS_H_

#include <iosfwd>

namespace app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitVerifyFailed = 2;
inline constexpr int kExitRuntimeError = 3;

// Entry point of the `fedbook` tool. Subcommands: synth, partition, pretrain,
// finetune, eval, verify, report.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace app

#endif  // APP_COMMANDS_H_
