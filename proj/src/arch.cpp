#include "beamkit/arch.hpp"

#include <json.hpp>

namespace beamkit {

using nlohmann::json;

int ArchSpec::input_dim() const {
  if (trunk == TrunkKind::GNN)
    return cgal.empty() ? 0 : cgal.front().in_dim;
  return cfcl_trunk.empty() ? 0 : cfcl_trunk.front().in_dim;
}

void ArchSpec::validate() const {
  if (head_in_dim < 1) throw ConfigError("arch: head_in_dim must be >= 1");
  if (schemes != "both" && schemes != "mmse" && schemes != "hzm")
    throw ConfigError("arch: schemes must be both, mmse or hzm");
  if (trunk == TrunkKind::GNN) {
    if (cgal.empty()) throw ConfigError("arch: GNN trunk needs CGAL layers");
    int dim = cgal.front().in_dim;
    for (const auto& l : cgal) {
      if (l.in_dim != dim)
        throw ConfigError("arch: CGAL input dim does not chain");
      if (l.head_dim < 1 || l.heads < 1)
        throw ConfigError("arch: CGAL dims must be positive");
      dim = l.head_dim * l.heads;
    }
    if (!cfcl_trunk.empty() && cfcl_trunk.front().in_dim != dim)
      throw ConfigError("arch: CGAL output does not chain into CFCL trunk");
    for (const auto& l : cfcl_trunk) {
      if (l.in_dim != dim) throw ConfigError("arch: CFCL dims do not chain");
      dim = l.out_dim;
    }
    if (dim != head_in_dim)
      throw ConfigError("arch: trunk output does not match head_in_dim");
  } else {
    if (mlp_k < 1) throw ConfigError("arch: MLP trunk needs mlp_k >= 1");
    if (cfcl_trunk.empty())
      throw ConfigError("arch: MLP trunk needs CFCL layers");
    int dim = cfcl_trunk.front().in_dim;
    for (const auto& l : cfcl_trunk) {
      if (l.in_dim != dim) throw ConfigError("arch: CFCL dims do not chain");
      dim = l.out_dim;
    }
    // The trunk emits all K node features flattened.
    if (dim != head_in_dim * mlp_k)
      throw ConfigError("arch: MLP trunk output must be mlp_k * head_in_dim");
  }
}

std::string ArchSpec::to_json() const {
  json j;
  j["trunk"] = trunk == TrunkKind::GNN ? "gnn" : "mlp";
  j["cgal"] = json::array();
  for (const auto& l : cgal)
    j["cgal"].push_back({{"in", l.in_dim},
                         {"head_dim", l.head_dim},
                         {"heads", l.heads},
                         {"crelu", l.crelu},
                         {"cbn", l.cbn}});
  j["cfcl_trunk"] = json::array();
  for (const auto& l : cfcl_trunk)
    j["cfcl_trunk"].push_back({{"in", l.in_dim},
                               {"out", l.out_dim},
                               {"crelu", l.crelu},
                               {"cbn", l.cbn}});
  j["head_in_dim"] = head_in_dim;
  j["residual"] = residual;
  j["sigmoid_as_printed"] = sigmoid_as_printed;
  j["mlp_k"] = mlp_k;
  j["schemes"] = schemes;
  return j.dump();
}

ArchSpec ArchSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("arch: bad JSON: " + std::string(e.what()));
  }
  ArchSpec a;
  try {
    const std::string t = j.at("trunk").get<std::string>();
    if (t == "gnn")
      a.trunk = TrunkKind::GNN;
    else if (t == "mlp")
      a.trunk = TrunkKind::MLP;
    else
      throw ConfigError("arch: unknown trunk kind " + t);
    for (const auto& l : j.at("cgal")) {
      CgalLayerSpec s;
      s.in_dim = l.at("in").get<int>();
      s.head_dim = l.at("head_dim").get<int>();
      s.heads = l.at("heads").get<int>();
      s.crelu = l.at("crelu").get<bool>();
      s.cbn = l.at("cbn").get<bool>();
      a.cgal.push_back(s);
    }
    for (const auto& l : j.at("cfcl_trunk")) {
      CfclLayerSpec s;
      s.in_dim = l.at("in").get<int>();
      s.out_dim = l.at("out").get<int>();
      s.crelu = l.at("crelu").get<bool>();
      s.cbn = l.at("cbn").get<bool>();
      a.cfcl_trunk.push_back(s);
    }
    a.head_in_dim = j.at("head_in_dim").get<int>();
    a.residual = j.at("residual").get<bool>();
    a.sigmoid_as_printed = j.at("sigmoid_as_printed").get<bool>();
    a.mlp_k = j.at("mlp_k").get<int>();
    a.schemes = j.value("schemes", "both");
  } catch (const json::exception& e) {
    throw ConfigError("arch: missing field: " + std::string(e.what()));
  }
  a.validate();
  return a;
}

ArchSpec ArchSpec::desk_default(int n_antennas) {
  ArchSpec a;
  a.trunk = TrunkKind::GNN;
  a.cgal = {{n_antennas, 16, 4, true, false}, {64, 32, 4, true, false}};
  a.cfcl_trunk = {{128, 64, true, false}, {64, 32, true, false}};
  a.head_in_dim = 32;
  a.validate();
  return a;
}

ArchSpec ArchSpec::paper_scale(int n_antennas) {
  ArchSpec a;
  a.trunk = TrunkKind::GNN;
  a.cgal = {{n_antennas, 64, 20, true, false}, {1280, 512, 20, true, false}};
  a.cfcl_trunk = {{10240, 512, true, true}, {512, 128, true, true}};
  a.head_in_dim = 128;
  a.validate();
  return a;
}

ArchSpec ArchSpec::mlp_default(int n_antennas, int k_users) {
  ArchSpec a;
  a.trunk = TrunkKind::MLP;
  a.mlp_k = k_users;
  const int in = n_antennas * k_users;
  a.cfcl_trunk = {{in, 128, true, false},
                  {128, 64, true, false},
                  {64, 8 * k_users, true, false}};
  a.head_in_dim = 8;
  a.validate();
  return a;
}

}  // namespace beamkit
