#pragma once

// The `vattn` command line: attn, verify, gradcheck, transport.
//
// Exit codes: 0 success, 1 numerical failure or failed check,
// 2 malformed input document, 3 invalid flag combination.

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "vattn/verify.hpp"

namespace vattn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitBadFlags = 3;

/// Runs the CLI with argv[0] as the program name. Documents go to `out`
/// (or the --out file), diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

nlohmann::json report_to_json(const verify::RunReport& report);

/// JSON text with every floating-point number printed to 17 significant
/// digits, so a written report parses back to the identical doubles.
/// Non-finite numbers are written as null.
std::string dump_json(const nlohmann::json& doc);

}  // namespace vattn::cli
