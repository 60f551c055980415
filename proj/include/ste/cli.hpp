#pragma once

#include "ste/io.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ste {

// Exit categories of the command surface.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// A command failure carrying its exit category; what() is a single line.
class CliError : public std::runtime_error {
public:
    CliError(int code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    int code() const noexcept { return code_; }

private:
    int code_;
};

// Commands write their artifacts under cfg.out_dir and a short deterministic
// receipt to `out`; failures throw CliError.
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_forecast(const RunConfig& cfg, std::ostream& out);
void cmd_evaluate(const RunConfig& cfg, std::ostream& out);
void cmd_simulate(const RunConfig& cfg, std::ostream& out);
void cmd_explain(const RunConfig& cfg, std::ostream& out);
void cmd_moran(const RunConfig& cfg, std::ostream& out);

// argv -> exit code; `args` excludes the program name. Errors print one
// machine-parseable line `error[<category>]: <reason>` to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

} // namespace ste
