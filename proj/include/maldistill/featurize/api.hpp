#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "maldistill/featurize/feature_matrix.hpp"

namespace maldistill::featurize {

using ArgValue = std::variant<std::int64_t, std::string>;

struct ApiArg {
  std::string key;
  ArgValue value;
};

struct ApiCallRecord {
  std::string api_name;
  std::vector<ApiArg> args;
};

inline constexpr std::size_t kApiHashDim = std::size_t{1} << 20;

/// Removes one trailing suffix out of ExW, ExA, Ex, W, A (longest first).
std::string strip_api_suffix(const std::string& name);

/// Category token of one argument value, e.g. "int_bin:3", "system32",
/// "reg:hklm", "cmd", or the lowercased string.
std::string categorize_arg(const ArgValue& value);

/// One "name|key=category" token per argument; a call without arguments
/// yields the bare normalized name.
std::vector<std::string> api_arg_tokens(const ApiCallRecord& rec);

/// MurmurHash3 x86 32-bit.
std::uint32_t murmur3_32(std::string_view data, std::uint32_t seed = 0);

/// Sorted distinct murmur3(token) mod dim. `dim` must be a power of two.
SparseRow hash_vectorize(const std::vector<std::string>& tokens, std::size_t dim = kApiHashDim);

/// API calls of a sandbox behaviour report, in process then call order.
/// Accepts the usual behavior.processes[].calls[] nesting or a top-level
/// "calls" array; arguments may be an object or a list of {name, value}.
std::vector<ApiCallRecord> parse_behavior_report(const nlohmann::json& report);

/// Tokens of every call in a report, hashed into one binary row.
SparseRow report_row(const std::vector<ApiCallRecord>& calls, std::size_t dim = kApiHashDim);

}  // namespace maldistill::featurize
