#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <openssl/evp.h>
#include <json.hpp>

namespace latentpde::harness {

inline constexpr const char* kCodeVersion = "latentpde 0.1.0";

// ---- hashing ---------------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 || EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: OpenSSL digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

/// Hash of the canonical (sorted-key, compact) JSON text.
inline std::string config_hash(const nlohmann::json& j) { return sha256_hex(j.dump()); }

// ---- manifests -------------------------------------------------------------------------------

/// Sidecar written next to every command output: <output>.manifest.json.
inline std::filesystem::path manifest_path(const std::filesystem::path& output) {
  return output.parent_path() / (output.filename().string() + ".manifest.json");
}

inline void write_manifest(const std::string& command, const nlohmann::json& config, const std::vector<std::filesystem::path>& inputs,
                           const std::vector<std::filesystem::path>& outputs) {
  nlohmann::json m;
  m["command"] = command;
  m["code_version"] = kCodeVersion;
  m["config"] = config;
  m["config_hash"] = config_hash(config);
  m["inputs"] = nlohmann::json::array();
  for (const auto& p : inputs) m["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  m["outputs"] = nlohmann::json::array();
  for (const auto& p : outputs) m["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  for (const auto& p : outputs) {
    std::ofstream out(manifest_path(p));
    if (!out) throw std::runtime_error("cannot write manifest for " + p.string());
    out << m.dump(2) << "\n";
  }
}

/// If `input` has a manifest, its recorded hash must match the file on disk.
inline void verify_input(const std::filesystem::path& input) {
  if (!std::filesystem::exists(input)) throw std::runtime_error("missing input " + input.string());
  const auto mp = manifest_path(input);
  if (!std::filesystem::exists(mp)) return;
  const auto m = nlohmann::json::parse(read_file(mp));
  const std::string want_name = input.filename().string();
  for (const auto& o : m.at("outputs")) {
    if (std::filesystem::path(o.at("path").get<std::string>()).filename() != want_name) continue;
    const std::string have = sha256_file(input);
    if (o.at("sha256").get<std::string>() != have)
      throw std::runtime_error(input.string() + ": sha256 " + have + " does not match its manifest (" + o.at("sha256").get<std::string>() +
                               "); the file changed after '" + m.at("command").get<std::string>() + "' wrote it, rerun that command");
    return;
  }
}

// ---- results ---------------------------------------------------------------------------------

struct ResultRow {
  std::string regime;
  std::string mask_kind;
  double sparsity = 0.0;
  double noise = 0.0;
  std::string method;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string instance;  // sample index, or "mean" for aggregates
};

inline constexpr const char* kCsvHeader = "regime,mask_kind,sparsity,noise,method,metric,value,seed,instance";

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv_line(const ResultRow& r) {
  return r.regime + "," + r.mask_kind + "," + format_double(r.sparsity) + "," + format_double(r.noise) + "," + r.method + "," +
         r.metric + "," + format_double(r.value) + "," + std::to_string(r.seed) + "," + r.instance;
}

/// Aggregate rows (instance "mean", mask_kind "all") per (regime, noise, method, metric), in first-seen order.
inline std::vector<ResultRow> aggregate(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, double, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::pair<double, int>> acc;
  std::map<Key, ResultRow> proto;
  for (const auto& r : rows) {
    if (r.instance == "mean") continue;
    const Key k{r.regime, r.noise, r.method, r.metric};
    if (!acc.count(k)) {
      order.push_back(k);
      proto[k] = r;
    }
    auto& [sum, n] = acc[k];
    sum += r.value;
    ++n;
  }
  std::vector<ResultRow> out;
  for (const auto& k : order) {
    ResultRow r = proto[k];
    r.mask_kind = "all";
    r.value = acc[k].first / acc[k].second;
    r.instance = "mean";
    out.push_back(r);
  }
  return out;
}

inline void write_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvHeader << "\n";
  for (const auto& r : rows) out << to_csv_line(r) << "\n";
  for (const auto& r : aggregate(rows)) out << to_csv_line(r) << "\n";
}

inline std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error(path.string() + ": not a results CSV (bad header)");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 9 fields");
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), f[4], f[5], std::stod(f[6]), std::stoull(f[7]), f[8]});
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

/// Mean of per-instance rows for (method, metric); throws when absent.
inline double mean_of(const std::vector<ResultRow>& rows, const std::string& method, const std::string& metric) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.instance != "mean" && r.method == method && r.metric == metric) {
      sum += r.value;
      ++n;
    }
  if (n == 0) throw std::runtime_error("no rows for method '" + method + "', metric '" + metric + "'");
  return sum / n;
}

}  // namespace latentpde::harness
