#include "maldistill/featurize/api.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <stdexcept>

namespace maldistill::featurize {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool contains(std::string_view s, std::string_view p) { return s.find(p) != std::string_view::npos; }

std::string int_category(std::int64_t v) {
  if (v < 0) return "int_neg";
  const auto u = static_cast<std::uint64_t>(v);
  // floor(log2(v + 1)), written so that v = INT64_MAX does not overflow.
  const int bin = u == UINT64_MAX ? 64 : std::bit_width(u + 1) - 1;
  return "int_bin:" + std::to_string(bin);
}

// "0x..." strings are integers in most sandbox reports.
bool parse_hex(const std::string& s, std::int64_t& out) {
  if (s.size() < 3 || s.size() > 18 || !(s[0] == '0' && (s[1] == 'x' || s[1] == 'X'))) return false;
  std::uint64_t v = 0;
  for (std::size_t i = 2; i < s.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (!std::isxdigit(c)) return false;
    v = v * 16 + static_cast<std::uint64_t>(std::isdigit(c) ? c - '0' : std::tolower(c) - 'a' + 10);
  }
  out = static_cast<std::int64_t>(v);
  return true;
}

constexpr std::array<std::string_view, 16> kCommands = {
    "cmd.exe", "cmd /c", "powershell", "rundll32", "regsvr32", "schtasks", "wscript",
    "cscript", "mshta",  "bitsadmin", "certutil", "vssadmin", "wmic",   "net user",
    "net stop", "taskkill"};

struct Hive {
  std::string_view prefix;
  std::string_view name;
};
constexpr std::array<Hive, 12> kHives = {{{"hkey_local_machine", "hklm"},
                                          {"hkey_current_user", "hkcu"},
                                          {"hkey_classes_root", "hkcr"},
                                          {"hkey_users", "hku"},
                                          {"hkey_current_config", "hkcc"},
                                          {"hklm\\", "hklm"},
                                          {"hkcu\\", "hkcu"},
                                          {"hkcr\\", "hkcr"},
                                          {"hku\\", "hku"},
                                          {"\\registry\\machine", "hklm"},
                                          {"\\registry\\user", "hku"},
                                          {"hkey_", "other"}}};

bool looks_like_path(std::string_view s) {
  if (s.size() >= 3 && std::isalpha(static_cast<unsigned char>(s[0])) && s[1] == ':' &&
      (s[2] == '\\' || s[2] == '/')) {
    return true;
  }
  return starts_with(s, "\\\\") || starts_with(s, "\\??\\") || starts_with(s, "%") ||
         starts_with(s, "/") || contains(s, "\\");
}

std::string string_category(const std::string& raw) {
  const std::string s = lower(raw);
  if (contains(s, "://") || starts_with(s, "www.")) return "url";
  for (const auto& h : kHives) {
    if (starts_with(s, h.prefix)) return "reg:" + std::string(h.name);
  }
  for (auto c : kCommands) {
    if (contains(s, c)) return "cmd";
  }
  if (looks_like_path(s)) {
    if (contains(s, "\\system32") || contains(s, "\\syswow64") || contains(s, "%system%")) {
      return "system32";
    }
    if (contains(s, "\\temp") || contains(s, "%temp%") || contains(s, "\\tmp\\")) return "temp";
    if (contains(s, "\\program files") || contains(s, "%programfiles%")) return "programfiles";
    if (contains(s, "\\windows") || contains(s, "%windir%") || contains(s, "%systemroot%")) {
      return "windows";
    }
    return "generic_path";
  }
  return s;
}

}  // namespace

std::string strip_api_suffix(const std::string& name) {
  for (std::string_view suffix : {"ExW", "ExA", "Ex", "W", "A"}) {
    if (name.size() > suffix.size() &&
        std::string_view(name).substr(name.size() - suffix.size()) == suffix) {
      return name.substr(0, name.size() - suffix.size());
    }
  }
  return name;
}

std::string categorize_arg(const ArgValue& value) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) return int_category(*i);
  const auto& s = std::get<std::string>(value);
  std::int64_t v;
  if (parse_hex(s, v)) return int_category(v);
  return string_category(s);
}

std::vector<std::string> api_arg_tokens(const ApiCallRecord& rec) {
  const std::string name = strip_api_suffix(rec.api_name);
  if (rec.args.empty()) return {name};
  std::vector<std::string> tokens;
  tokens.reserve(rec.args.size());
  for (const auto& a : rec.args) tokens.push_back(name + "|" + a.key + "=" + categorize_arg(a.value));
  return tokens;
}

std::uint32_t murmur3_32(std::string_view data, std::uint32_t seed) {
  constexpr std::uint32_t c1 = 0xcc9e2d51, c2 = 0x1b873593;
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  const std::size_t nblocks = data.size() / 4;
  std::uint32_t h = seed;
  for (std::size_t i = 0; i < nblocks; ++i) {
    std::uint32_t k;
    std::memcpy(&k, p + 4 * i, 4);
    k *= c1;
    k = std::rotl(k, 15);
    k *= c2;
    h ^= k;
    h = std::rotl(h, 13);
    h = h * 5 + 0xe6546b64;
  }
  const unsigned char* tail = p + 4 * nblocks;
  std::uint32_t k = 0;
  switch (data.size() & 3) {
    case 3: k ^= static_cast<std::uint32_t>(tail[2]) << 16; [[fallthrough]];
    case 2: k ^= static_cast<std::uint32_t>(tail[1]) << 8; [[fallthrough]];
    case 1:
      k ^= tail[0];
      k *= c1;
      k = std::rotl(k, 15);
      k *= c2;
      h ^= k;
  }
  h ^= static_cast<std::uint32_t>(data.size());
  h ^= h >> 16;
  h *= 0x85ebca6b;
  h ^= h >> 13;
  h *= 0xc2b2ae35;
  h ^= h >> 16;
  return h;
}

SparseRow hash_vectorize(const std::vector<std::string>& tokens, std::size_t dim) {
  if (dim == 0 || !std::has_single_bit(dim) || dim > (std::size_t{1} << 32)) {
    throw std::invalid_argument("hash dimension must be a power of two <= 2^32");
  }
  SparseRow row;
  row.reserve(tokens.size());
  for (const auto& t : tokens) row.push_back(static_cast<std::uint32_t>(murmur3_32(t) & (dim - 1)));
  std::sort(row.begin(), row.end());
  row.erase(std::unique(row.begin(), row.end()), row.end());
  return row;
}

namespace {

ArgValue arg_value(const nlohmann::json& v) {
  if (v.is_number_integer()) {
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      return INT64_MAX;
    }
    return v.get<std::int64_t>();
  }
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return static_cast<std::int64_t>(v.get<bool>());
  return v.dump();
}

void append_calls(const nlohmann::json& calls, std::vector<ApiCallRecord>& out) {
  for (const auto& c : calls) {
    ApiCallRecord rec;
    rec.api_name = c.at("api").get<std::string>();
    if (rec.api_name.empty()) throw std::runtime_error("behavior report: empty api name");
    if (c.contains("arguments")) {
      const auto& args = c.at("arguments");
      if (args.is_object()) {
        for (const auto& [k, v] : args.items()) rec.args.push_back({k, arg_value(v)});
      } else {
        for (const auto& a : args) {
          rec.args.push_back({a.at("name").get<std::string>(), arg_value(a.at("value"))});
        }
      }
    }
    out.push_back(std::move(rec));
  }
}

}  // namespace

std::vector<ApiCallRecord> parse_behavior_report(const nlohmann::json& report) {
  std::vector<ApiCallRecord> out;
  if (report.contains("calls")) append_calls(report.at("calls"), out);
  if (report.contains("behavior")) {
    for (const auto& proc : report.at("behavior").value("processes", nlohmann::json::array())) {
      if (proc.contains("calls")) append_calls(proc.at("calls"), out);
    }
  }
  return out;
}

SparseRow report_row(const std::vector<ApiCallRecord>& calls, std::size_t dim) {
  std::vector<std::string> tokens;
  for (const auto& c : calls) {
    for (auto& t : api_arg_tokens(c)) tokens.push_back(std::move(t));
  }
  return hash_vectorize(tokens, dim);
}

}  // namespace maldistill::featurize
