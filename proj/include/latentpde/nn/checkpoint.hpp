#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "latentpde/container.hpp"
#include "latentpde/nn/layers.hpp"

namespace latentpde::nn {

inline constexpr const char* kCheckpointMagic = "LPDECKPT";

/// Writes every tensor of `ps` in order; `header` carries architecture, stats, seed and step.
inline void save_checkpoint(const std::filesystem::path& path, nlohmann::json header, const ParamSet& ps) {
  header["tensors"] = nlohmann::json::array();
  std::vector<double> payload;
  payload.reserve(ps.count());
  for (const auto& [name, t] : ps.items()) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
    payload.insert(payload.end(), t.value().begin(), t.value().end());
  }
  io::write_container(path, kCheckpointMagic, std::move(header), payload);
}

inline io::Container read_checkpoint(const std::filesystem::path& path) { return io::read_container(path, kCheckpointMagic); }

/// Copies checkpoint tensors into `ps`; names, order and shapes must match exactly.
inline void load_parameters(const io::Container& c, ParamSet& ps, const std::string& where) {
  const auto& list = c.header.at("tensors");
  if (list.size() != ps.items().size())
    throw std::runtime_error(where + ": checkpoint has " + std::to_string(list.size()) + " tensors, network expects " +
                             std::to_string(ps.items().size()));
  io::PayloadCursor cur(c.payload);
  std::size_t i = 0;
  for (const auto& [name, t] : ps.items()) {
    const auto& entry = list.at(i++);
    const auto shape = entry.at("shape").get<Shape>();
    if (entry.at("name").get<std::string>() != name || shape != t.shape())
      throw std::runtime_error(where + ": tensor '" + entry.at("name").get<std::string>() + "' " + to_string(shape) +
                               " does not match network tensor '" + name + "' " + to_string(t.shape()));
    Tensor tt = t;
    tt.value() = cur.take(t.size());
  }
  if (!cur.done()) throw std::runtime_error(where + ": trailing payload after the last tensor");
}

}  // namespace latentpde::nn
