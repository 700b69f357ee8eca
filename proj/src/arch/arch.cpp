#include "dggan/arch.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "dggan/hashing.hpp"

namespace dggan::arch {

namespace {

const char* prefix(NetRole role) { return role == NetRole::generator ? "g" : "d"; }

std::string layer_name(NetRole role, int stage, int id) {
  return std::string(prefix(role)) + "/stage" + std::to_string(stage) + "/layer" + std::to_string(id);
}

std::string rgb_name(NetRole role, int stage) {
  return std::string(prefix(role)) + "/stage" + std::to_string(stage) +
         (role == NetRole::generator ? "/to_rgb" : "/from_rgb");
}

std::string dense_name(NetRole role) { return std::string(prefix(role)) + "/dense"; }

int next_id(const Stage& st) {
  int id = -1;
  for (const auto& l : st.convs) id = std::max(id, l.id);
  return id + 1;
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

// Network equality ignoring fade flags.
bool same_layout(const NetworkSpec& a, const NetworkSpec& b) {
  if (a.role != b.role || a.latent_dim != b.latent_dim || a.d0 != b.d0 || a.base_channels != b.base_channels ||
      a.stages.size() != b.stages.size()) {
    return false;
  }
  for (std::size_t s = 0; s < a.stages.size(); ++s) {
    if (a.stages[s].convs != b.stages[s].convs || a.stages[s].rgb != b.stages[s].rgb) return false;
  }
  return true;
}

// If `child` equals `parent` plus one layer inserted at `pos` of the final
// stage, returns that layer.
std::optional<LayerSpec> single_insertion(const NetworkSpec& parent, const NetworkSpec& child, std::size_t pos) {
  if (parent.stages.size() != child.stages.size() || parent.stages.empty()) return std::nullopt;
  NetworkSpec trimmed = child;
  auto& convs = trimmed.stages.back().convs;
  if (convs.size() != parent.stages.back().convs.size() + 1 || pos >= convs.size()) return std::nullopt;
  const LayerSpec added = convs[pos];
  convs.erase(convs.begin() + static_cast<std::ptrdiff_t>(pos));
  if (!same_layout(parent, trimmed)) return std::nullopt;
  if (added.role != LayerRole::grown || added.id != next_id(parent.stages.back())) return std::nullopt;
  return added;
}

}  // namespace

// ---- actions ----------------------------------------------------------------

std::string GrowthAction::code() const {
  switch (kind) {
    case Kind::grow_g: return "G" + std::to_string(filter_size) + "x" + std::to_string(n_filters);
    case Kind::grow_d: return "D" + std::to_string(filter_size) + "x" + std::to_string(n_filters);
    case Kind::grow_both: return "B";
  }
  return "?";
}

GrowthAction GrowthAction::parse(const std::string& code) {
  if (code == "B") return grow_both();
  if (code.size() >= 4 && (code[0] == 'G' || code[0] == 'D')) {
    const auto x = code.find('x');
    if (x != std::string::npos && x > 1) {
      try {
        std::size_t used_k = 0, used_n = 0;
        const int k = std::stoi(code.substr(1, x - 1), &used_k);
        const int n = std::stoi(code.substr(x + 1), &used_n);
        if (used_k == x - 1 && used_n == code.size() - x - 1 && k > 0 && n > 0) {
          return code[0] == 'G' ? grow_g(k, n) : grow_d(k, n);
        }
      } catch (const std::exception&) {
      }
    }
  }
  throw FormatError("unrecognized action code '" + code + "'");
}

int ActionSpace::min_stage_channels() const {
  return filter_counts.empty() ? 1 : *std::min_element(filter_counts.begin(), filter_counts.end());
}

void ActionSpace::validate() const {
  for (int k : filter_sizes)
    if (k <= 0 || k % 2 == 0) throw ContractError("filter sizes must be positive and odd");
  for (int n : filter_counts)
    if (n <= 0) throw ContractError("filter counts must be positive");
  if (target_resolution <= 0) throw ContractError("target resolution must be positive");
}

// ---- construction / validation ---------------------------------------------

ArchPair base_pair(const BaseConfig& cfg) {
  if (cfg.d0 < 4 || (cfg.d0 & (cfg.d0 - 1)) != 0) throw ContractError("d0 must be a power of two >= 4");
  if (cfg.latent_dim <= 0 || cfg.base_channels <= 0) throw ContractError("latent_dim and base_channels must be positive");
  const int c = cfg.base_channels;
  ArchPair p;
  p.g.role = NetRole::generator;
  p.g.latent_dim = cfg.latent_dim;
  p.g.d0 = cfg.d0;
  p.g.base_channels = c;
  p.g.stages.push_back(Stage{{{0, 3, c, LayerRole::base}, {1, 3, c, LayerRole::base}},
                             {0, 1, kImageChannels, LayerRole::to_rgb},
                             false});
  p.d.role = NetRole::discriminator;
  p.d.d0 = cfg.d0;
  p.d.base_channels = c;
  p.d.stages.push_back(Stage{{{0, 3, c, LayerRole::base}, {1, 3, c, LayerRole::base}},
                             {0, 1, c, LayerRole::from_rgb},
                             false});
  return p;
}

void validate(const ArchPair& pair) {
  for (const NetworkSpec* net : {&pair.g, &pair.d}) {
    const bool is_g = net->role == NetRole::generator;
    const std::string who = is_g ? "generator" : "discriminator";
    if (net->stages.empty()) throw ContractError(who + " has no stages");
    if (net->d0 < 4 || (net->d0 & (net->d0 - 1)) != 0) throw ContractError(who + " d0 must be a power of two >= 4");
    for (std::size_t s = 0; s < net->stages.size(); ++s) {
      const Stage& st = net->stages[s];
      if (st.convs.empty()) throw ContractError(who + " stage " + std::to_string(s) + " has no convs");
      std::set<int> ids;
      for (const auto& l : st.convs) {
        if (l.filter_size <= 0 || l.filter_size % 2 == 0 || l.n_filters <= 0) {
          throw ContractError(who + " stage " + std::to_string(s) + " has an invalid layer");
        }
        if (!ids.insert(l.id).second) throw ContractError(who + " stage " + std::to_string(s) + " reuses a layer id");
      }
      if (st.rgb.filter_size != 1) throw ContractError(who + " rgb layers must be 1x1");
      if (is_g && st.rgb.n_filters != kImageChannels) throw ContractError("to_rgb must emit image channels");
      if (st.fade_in && s + 1 != net->stages.size()) throw ContractError(who + " only the final stage may fade in");
      if (st.fade_in && s == 0) throw ContractError(who + " stage 0 cannot fade in");
    }
    const Stage& last = net->stages.back();
    const LayerSpec& anchor = is_g ? last.convs.back() : last.convs.front();
    if (anchor.role != LayerRole::base) throw ContractError(who + " lost its growth anchor");
    if (!is_g) {
      for (std::size_t s = 0; s + 1 < net->stages.size(); ++s) {
        if (net->stages[s].rgb.n_filters != net->stages[s + 1].convs.back().n_filters) {
          throw ContractError("discriminator stage " + std::to_string(s) + " input width does not match stage above");
        }
      }
    }
  }
  if (pair.g.stages.size() != pair.d.stages.size() || pair.g.d0 != pair.d.d0) {
    throw ContractError("generator output and discriminator input resolutions differ");
  }
  if (pair.g.fading() != pair.d.fading()) throw ContractError("fade-in flags differ between G and D");
}

std::vector<GrowthAction> enumerate_actions(const ArchPair& pair, const ActionSpace& space) {
  std::vector<GrowthAction> out;
  for (int k : space.filter_sizes)
    for (int n : space.filter_counts) out.push_back(GrowthAction::grow_g(k, n));
  for (int k : space.filter_sizes)
    for (int n : space.filter_counts) out.push_back(GrowthAction::grow_d(k, n));
  if (space.allow_grow_both && pair.resolution() < space.target_resolution) out.push_back(GrowthAction::grow_both());
  return out;
}

std::vector<GrowthAction> enumerate_actions(const ArchPair& pair, int target_resolution) {
  ActionSpace space;
  space.target_resolution = target_resolution;
  return enumerate_actions(pair, space);
}

ArchPair apply_action(const ArchPair& pair, const GrowthAction& action, const ActionSpace& space) {
  ArchPair child = pair;
  for (auto& st : child.g.stages) st.fade_in = false;
  for (auto& st : child.d.stages) st.fade_in = false;

  switch (action.kind) {
    case GrowthAction::Kind::grow_g: {
      if (!contains(space.filter_sizes, action.filter_size) || !contains(space.filter_counts, action.n_filters)) {
        throw ContractError("action " + action.code() + " is outside the action space");
      }
      Stage& st = child.g.stages.back();
      const LayerSpec layer{next_id(st), action.filter_size, action.n_filters, LayerRole::grown};
      st.convs.insert(st.convs.end() - 1, layer);
      break;
    }
    case GrowthAction::Kind::grow_d: {
      if (!contains(space.filter_sizes, action.filter_size) || !contains(space.filter_counts, action.n_filters)) {
        throw ContractError("action " + action.code() + " is outside the action space");
      }
      Stage& st = child.d.stages.back();
      const LayerSpec layer{next_id(st), action.filter_size, action.n_filters, LayerRole::grown};
      st.convs.insert(st.convs.begin() + 1, layer);
      break;
    }
    case GrowthAction::Kind::grow_both: {
      if (!space.allow_grow_both) throw ContractError("grow_both is disabled in this action space");
      if (pair.resolution() >= space.target_resolution) {
        throw ContractError("grow_both would exceed the target resolution " + std::to_string(space.target_resolution));
      }
      const int floor_ch = space.min_stage_channels();
      const int g_prev = child.g.stages.back().convs.back().n_filters;
      const int gc = std::max(floor_ch, g_prev / 2);
      child.g.stages.push_back(Stage{{{0, 3, gc, LayerRole::base}, {1, 3, gc, LayerRole::base}},
                                     {0, 1, kImageChannels, LayerRole::to_rgb},
                                     true});
      const int d_prev = child.d.stages.back().rgb.n_filters;
      const int dc = std::max(floor_ch, d_prev / 2);
      child.d.stages.push_back(Stage{{{0, 3, dc, LayerRole::base}, {1, 3, d_prev, LayerRole::base}},
                                     {0, 1, dc, LayerRole::from_rgb},
                                     true});
      break;
    }
  }
  return child;
}

std::optional<GrowthAction> derive_action(const ArchPair& parent, const ArchPair& child) {
  const std::size_t ps = parent.g.stages.size();
  if (child.g.stages.size() == ps + 1 && child.d.stages.size() == ps + 1) {
    NetworkSpec g = child.g, d = child.d;
    g.stages.pop_back();
    d.stages.pop_back();
    if (same_layout(parent.g, g) && same_layout(parent.d, d) && child.g.stages.back().fade_in &&
        child.d.stages.back().fade_in) {
      return GrowthAction::grow_both();
    }
    throw ContractError("child adds a stage but differs from the parent elsewhere");
  }
  if (child.g.stages.size() != ps || child.d.stages.size() != parent.d.stages.size()) {
    throw ContractError("child is not derivable from the parent by one growth action");
  }
  const bool g_same = same_layout(parent.g, child.g);
  const bool d_same = same_layout(parent.d, child.d);
  if (g_same && d_same) return std::nullopt;
  if (d_same) {
    const auto& convs = child.g.stages.back().convs;
    if (convs.size() >= 2) {
      if (auto l = single_insertion(parent.g, child.g, convs.size() - 2)) {
        return GrowthAction::grow_g(l->filter_size, l->n_filters);
      }
    }
  }
  if (g_same) {
    if (auto l = single_insertion(parent.d, child.d, 1)) return GrowthAction::grow_d(l->filter_size, l->n_filters);
  }
  throw ContractError("child is not derivable from the parent by one growth action");
}

// ---- parameters -------------------------------------------------------------

std::vector<ConvShape> conv_shapes(const NetworkSpec& spec) {
  std::vector<ConvShape> out;
  const int S = static_cast<int>(spec.stages.size());
  if (spec.role == NetRole::generator) {
    int c = spec.base_channels;
    for (int s = 0; s < S; ++s) {
      const Stage& st = spec.stages[static_cast<std::size_t>(s)];
      for (const auto& l : st.convs) {
        out.push_back({layer_name(spec.role, s, l.id), c, l.n_filters, l.filter_size});
        c = l.n_filters;
      }
      out.push_back({rgb_name(spec.role, s), c, st.rgb.n_filters, 1});
    }
  } else {
    for (int s = S - 1; s >= 0; --s) {
      const Stage& st = spec.stages[static_cast<std::size_t>(s)];
      out.push_back({rgb_name(spec.role, s), kImageChannels, st.rgb.n_filters, 1});
      int c = st.rgb.n_filters;
      for (const auto& l : st.convs) {
        out.push_back({layer_name(spec.role, s, l.id), c, l.n_filters, l.filter_size});
        c = l.n_filters;
      }
    }
  }
  return out;
}

std::pair<int, int> dense_shape(const NetworkSpec& spec) {
  const int area = spec.d0 * spec.d0;
  if (spec.role == NetRole::generator) return {spec.latent_dim, spec.base_channels * area};
  return {spec.stages.front().convs.back().n_filters * area, 1};
}

std::int64_t param_count(const NetworkSpec& spec) {
  std::int64_t total = 0;
  for (const auto& c : conv_shapes(spec)) {
    total += static_cast<std::int64_t>(c.c_out) * (static_cast<std::int64_t>(c.k) * c.k * c.c_in + 1);
  }
  const auto [in, out] = dense_shape(spec);
  total += static_cast<std::int64_t>(out) * (in + 1);
  return total;
}

double g2d_ratio(const ArchPair& pair) {
  return static_cast<double>(param_count(pair.g)) / static_cast<double>(param_count(pair.d));
}

std::int64_t element_count(const WeightSet& ws) {
  std::int64_t n = 0;
  for (const auto& [name, t] : ws) n += static_cast<std::int64_t>(t.size());
  return n;
}

namespace {

tensor::Tensor<float> he_normal(const tensor::Shape& shape, int fan_in, std::uint64_t seed, const std::string& name) {
  std::mt19937_64 rng(derive_seed(seed, name));
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / fan_in));
  tensor::Tensor<float> t(shape);
  for (auto& v : t.vec()) v = static_cast<float>(nd(rng));
  return t;
}

WeightSet instantiate_network(const NetworkSpec& spec, std::uint64_t seed) {
  WeightSet ws;
  for (const auto& c : conv_shapes(spec)) {
    ws[c.name + "/weight"] = he_normal({c.c_out, c.c_in, c.k, c.k}, c.c_in * c.k * c.k, seed, c.name);
    ws[c.name + "/bias"] = tensor::Tensor<float>({c.c_out});
  }
  const auto [in, out] = dense_shape(spec);
  const std::string dn = dense_name(spec.role);
  ws[dn + "/weight"] = he_normal({out, in}, in, seed, dn);
  ws[dn + "/bias"] = tensor::Tensor<float>({out});
  return ws;
}

void copy_overlap(const tensor::Tensor<float>& src, tensor::Tensor<float>& dst, const std::string& name) {
  if (src.shape() == dst.shape()) {
    dst = src;
    return;
  }
  if (src.ndim() != dst.ndim()) throw ContractError("inherit: rank changed for " + name);
  const int nd = src.ndim();
  std::vector<int> lim(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) lim[static_cast<std::size_t>(i)] = std::min(src.dim(i), dst.dim(i));
  std::vector<int> idx(static_cast<std::size_t>(nd), 0);
  if (tensor::shape_numel(lim) == 0) return;
  while (true) {
    std::size_t so = 0, doff = 0;
    for (int i = 0; i < nd; ++i) {
      so = so * static_cast<std::size_t>(src.dim(i)) + static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
      doff = doff * static_cast<std::size_t>(dst.dim(i)) + static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
    }
    dst[doff] = src[so];
    int ax = nd - 1;
    while (ax >= 0 && ++idx[static_cast<std::size_t>(ax)] == lim[static_cast<std::size_t>(ax)]) {
      idx[static_cast<std::size_t>(ax)] = 0;
      --ax;
    }
    if (ax < 0) break;
  }
}

void inherit_network(WeightSet& child, const WeightSet& parent) {
  for (auto& [name, t] : child) {
    auto it = parent.find(name);
    if (it != parent.end()) copy_overlap(it->second, t, name);
  }
}

}  // namespace

PairWeights instantiate(const ArchPair& pair, std::uint64_t seed) {
  return PairWeights{instantiate_network(pair.g, derive_seed(seed, "g")),
                     instantiate_network(pair.d, derive_seed(seed, "d"))};
}

void inherit_weights(const ArchPair& child, PairWeights& child_ws, const ArchPair& parent,
                     const PairWeights& parent_ws) {
  (void)derive_action(parent, child);
  inherit_network(child_ws.g, parent_ws.g);
  inherit_network(child_ws.d, parent_ws.d);
}

// ---- serialization ----------------------------------------------------------

namespace {

const char* role_str(LayerRole r) {
  switch (r) {
    case LayerRole::base: return "base";
    case LayerRole::grown: return "grown";
    case LayerRole::to_rgb: return "to_rgb";
    case LayerRole::from_rgb: return "from_rgb";
  }
  return "?";
}

LayerRole role_from(const std::string& s) {
  if (s == "base") return LayerRole::base;
  if (s == "grown") return LayerRole::grown;
  if (s == "to_rgb") return LayerRole::to_rgb;
  if (s == "from_rgb") return LayerRole::from_rgb;
  throw FormatError("unknown layer role '" + s + "'");
}

nlohmann::json layer_json(const LayerSpec& l) {
  return {{"id", l.id}, {"k", l.filter_size}, {"n", l.n_filters}, {"role", role_str(l.role)}};
}

LayerSpec layer_from(const nlohmann::json& j) {
  return {j.at("id").get<int>(), j.at("k").get<int>(), j.at("n").get<int>(), role_from(j.at("role").get<std::string>())};
}

}  // namespace

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& st : spec.stages) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : st.convs) layers.push_back(layer_json(l));
    stages.push_back({{"layers", layers}, {"rgb", layer_json(st.rgb)}, {"fade_in", st.fade_in}});
  }
  return {{"role", spec.role == NetRole::generator ? "G" : "D"},
          {"latent_dim", spec.latent_dim},
          {"d0", spec.d0},
          {"base_channels", spec.base_channels},
          {"stages", stages}};
}

NetworkSpec network_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    const auto role = j.at("role").get<std::string>();
    if (role != "G" && role != "D") throw FormatError("network role must be G or D");
    spec.role = role == "G" ? NetRole::generator : NetRole::discriminator;
    spec.latent_dim = j.at("latent_dim").get<int>();
    spec.d0 = j.at("d0").get<int>();
    spec.base_channels = j.at("base_channels").get<int>();
    for (const auto& sj : j.at("stages")) {
      Stage st;
      for (const auto& lj : sj.at("layers")) st.convs.push_back(layer_from(lj));
      st.rgb = layer_from(sj.at("rgb"));
      st.fade_in = sj.at("fade_in").get<bool>();
      spec.stages.push_back(std::move(st));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network spec: ") + e.what());
  }
}

nlohmann::json to_json(const ArchPair& pair) { return {{"g", to_json(pair.g)}, {"d", to_json(pair.d)}}; }

ArchPair arch_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("g") || !j.contains("d")) throw FormatError("arch pair needs g and d");
  ArchPair p{network_from_json(j.at("g")), network_from_json(j.at("d"))};
  validate(p);
  return p;
}

}  // namespace dggan::arch
