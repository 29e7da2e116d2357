#pragma once

// Grid-spec documents (JSON) and the binary policy file.
//
// Policy file layout, all integers and floats little-endian:
//   magic      8 bytes  "GSPOLICY"
//   version    u32      kPolicyFormatVersion
//   abstract   u32      size of the abstract action set the head was built for
//   nsizes     u32      number of layer sizes that follow
//   sizes      u32 x nsizes
//   count      u64      number of parameters
//   values     f64 x count (W0, b0, W1, b1, ... as in PolicyParams)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridshield/agent.hpp"
#include "gridshield/grid.hpp"
#include "gridshield/grids.hpp"
#include "gridshield/policy.hpp"

namespace gridshield {

class GridParseError : public GridError {
public:
  using GridError::GridError;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Grid specs

inline nlohmann::ordered_json grid_to_json(const GridSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["buses"] = spec.buses;
  j["slack_bus"] = spec.slack_bus;
  j["lines"] = nlohmann::ordered_json::array();
  for (const auto& l : spec.lines)
    j["lines"].push_back({{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus},
                          {"susceptance", l.susceptance}, {"limit", l.thermal_limit}});
  j["generators"] = nlohmann::ordered_json::array();
  for (const auto& g : spec.generators)
    j["generators"].push_back(
        {{"id", g.id}, {"bus", g.bus}, {"p_min", g.p_min}, {"p_max", g.p_max}, {"ramp", g.ramp_limit}});
  j["loads"] = nlohmann::ordered_json::array();
  for (const auto& d : spec.loads)
    j["loads"].push_back({{"id", d.id}, {"bus", d.bus}, {"base_demand", d.base_demand}});
  return j;
}

namespace detail {

// Collects schema violations as "path: problem" strings.
struct FieldReader {
  std::vector<std::string> errors;

  template <class T>
  bool read(const nlohmann::json& obj, const std::string& key, const std::string& path, T& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      errors.push_back(path + key + ": missing");
      return false;
    }
    const bool ok = std::is_same_v<T, std::string> ? it->is_string()
                    : std::is_integral_v<T>         ? it->is_number_integer()
                                                    : it->is_number();
    if (!ok) {
      errors.push_back(path + key + ": wrong type (" + std::string(it->type_name()) + ")");
      return false;
    }
    out = it->get<T>();
    return true;
  }

  const nlohmann::json* array(const nlohmann::json& obj, const std::string& key) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      errors.push_back(key + ": missing");
      return nullptr;
    }
    if (!it->is_array()) {
      errors.push_back(key + ": expected an array");
      return nullptr;
    }
    return &*it;
  }
};

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

/// Schema errors and invariant breaches both surface as ValidationError.
inline GridSpec grid_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError({"document: expected an object"});
  detail::FieldReader rd;
  GridSpec spec;
  if (j.contains("name")) rd.read(j, "name", "", spec.name);
  rd.read(j, "slack_bus", "", spec.slack_bus);

  if (const auto* buses = rd.array(j, "buses")) {
    for (std::size_t i = 0; i < buses->size(); ++i) {
      if (!(*buses)[i].is_number_integer())
        rd.errors.push_back("buses[" + std::to_string(i) + "]: expected an integer");
      else
        spec.buses.push_back((*buses)[i].get<int>());
    }
  }
  if (const auto* lines = rd.array(j, "lines")) {
    for (std::size_t i = 0; i < lines->size(); ++i) {
      const auto& o = (*lines)[i];
      const std::string p = "lines[" + std::to_string(i) + "].";
      LineSpec l;
      l.id = static_cast<int>(i);
      if (o.contains("id")) rd.read(o, "id", p, l.id);
      rd.read(o, "from", p, l.from_bus);
      rd.read(o, "to", p, l.to_bus);
      rd.read(o, "susceptance", p, l.susceptance);
      rd.read(o, "limit", p, l.thermal_limit);
      spec.lines.push_back(l);
    }
  }
  if (const auto* gens = rd.array(j, "generators")) {
    for (std::size_t i = 0; i < gens->size(); ++i) {
      const auto& o = (*gens)[i];
      const std::string p = "generators[" + std::to_string(i) + "].";
      GenSpec g;
      g.id = static_cast<int>(i);
      if (o.contains("id")) rd.read(o, "id", p, g.id);
      rd.read(o, "bus", p, g.bus);
      rd.read(o, "p_min", p, g.p_min);
      rd.read(o, "p_max", p, g.p_max);
      rd.read(o, "ramp", p, g.ramp_limit);
      spec.generators.push_back(g);
    }
  }
  if (const auto* loads = rd.array(j, "loads")) {
    for (std::size_t i = 0; i < loads->size(); ++i) {
      const auto& o = (*loads)[i];
      const std::string p = "loads[" + std::to_string(i) + "].";
      LoadSpec d;
      d.id = static_cast<int>(i);
      if (o.contains("id")) rd.read(o, "id", p, d.id);
      rd.read(o, "bus", p, d.bus);
      rd.read(o, "base_demand", p, d.base_demand);
      spec.loads.push_back(d);
    }
  }
  if (!rd.errors.empty()) throw ValidationError(std::move(rd.errors));
  require_valid(spec);
  return spec;
}

inline GridSpec parse_grid_spec(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw GridParseError("grid spec parse error at " + detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1) +
                         ": " + e.what());
  }
  return grid_from_json(j);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline GridSpec load_grid_spec(const std::filesystem::path& path) {
  return parse_grid_spec(read_text_file(path));
}

inline void save_grid_spec(const GridSpec& spec, const std::filesystem::path& path) {
  write_text_file(path, grid_to_json(spec).dump(2) + "\n");
}

/// A builtin name, otherwise a path to a grid document.
inline GridSpec resolve_grid(const std::string& name_or_path) {
  for (const auto& n : builtin_grid_names())
    if (n == name_or_path) return builtin_grid(n);
  if (!std::filesystem::exists(name_or_path))
    throw UnknownGridError("'" + name_or_path + "' is neither a builtin grid nor an existing file");
  return load_grid_spec(name_or_path);
}

// ---------------------------------------------------------------------------
// Policy files

inline constexpr std::array<char, 8> kPolicyMagic = {'G', 'S', 'P', 'O', 'L', 'I', 'C', 'Y'};
inline constexpr std::uint32_t kPolicyFormatVersion = 1;

class PolicyFileError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};
class PolicyVersionError : public PolicyFileError {
public:
  using PolicyFileError::PolicyFileError;
};
class PolicyCorruptError : public PolicyFileError {
public:
  using PolicyFileError::PolicyFileError;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  template <class U>
  U take(const char* what) {
    if (buf.size() - pos < sizeof(U)) throw PolicyCorruptError(std::string("policy file truncated in ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += sizeof(U);
    return v;
  }
};

}  // namespace detail

inline std::string encode_policy(const PolicyParams& p) {
  if (!shapes_consistent(p)) throw PolicyCorruptError("encode_policy: parameter count does not match layer sizes");
  std::string out(kPolicyMagic.begin(), kPolicyMagic.end());
  detail::put_le<std::uint32_t>(out, kPolicyFormatVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.output_size()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.sizes.size()));
  for (int s : p.sizes) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(p.values.size()));
  for (double v : p.values) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

/// Rejects files built for a different format version or abstract action set.
inline PolicyParams decode_policy(const std::string& bytes, int expected_abstract = kAbstractCount) {
  if (bytes.size() < kPolicyMagic.size() || std::memcmp(bytes.data(), kPolicyMagic.data(), kPolicyMagic.size()) != 0)
    throw PolicyCorruptError("not a policy file (bad magic)");
  detail::ByteReader rd{bytes, kPolicyMagic.size()};
  const auto version = rd.take<std::uint32_t>("version");
  if (version != kPolicyFormatVersion)
    throw PolicyVersionError("policy format version " + std::to_string(version) + ", expected " +
                             std::to_string(kPolicyFormatVersion));
  const auto abstract = rd.take<std::uint32_t>("abstract-set size");
  if (static_cast<int>(abstract) != expected_abstract)
    throw PolicyVersionError("policy built for " + std::to_string(abstract) + " abstract actions, expected " +
                             std::to_string(expected_abstract));
  const auto nsizes = rd.take<std::uint32_t>("layer count");
  if (nsizes < 2 || nsizes > 64) throw PolicyCorruptError("implausible layer count " + std::to_string(nsizes));
  PolicyParams p;
  for (std::uint32_t i = 0; i < nsizes; ++i) {
    const auto s = rd.take<std::uint32_t>("layer sizes");
    if (s == 0 || s > (1u << 20)) throw PolicyCorruptError("implausible layer size " + std::to_string(s));
    p.sizes.push_back(static_cast<int>(s));
  }
  if (p.output_size() != static_cast<int>(abstract))
    throw PolicyCorruptError("output layer size disagrees with the abstract-set size");
  const auto count = rd.take<std::uint64_t>("parameter count");
  if (count != parameter_count(p.sizes)) throw PolicyCorruptError("parameter count does not match layer sizes");
  if ((bytes.size() - rd.pos) / 8 < count) throw PolicyCorruptError("policy file truncated in parameters");
  p.values.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) p.values.push_back(std::bit_cast<double>(rd.take<std::uint64_t>("parameters")));
  if (rd.pos != bytes.size()) throw PolicyCorruptError("trailing bytes after parameters");
  return p;
}

inline void save_policy(const PolicyParams& p, const std::filesystem::path& path) {
  write_text_file(path, encode_policy(p));
}

inline PolicyParams load_policy(const std::filesystem::path& path, int expected_abstract = kAbstractCount) {
  return decode_policy(read_text_file(path), expected_abstract);
}

}  // namespace gridshield
