#pragma once

// Growable generator/discriminator genomes and the discrete growth actions.
//
// Stage s of either network runs at resolution d0 * 2^s. The generator's
// growth anchor is the last conv of its final stage; new G layers go right
// before it. The discriminator's anchor is the first conv of its final
// (input-resolution) stage; new D layers go right after it. Layer ids inside
// a stage are never reused, so weight names survive insertion.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dggan/tensor.hpp"
#include "json.hpp"

namespace dggan::arch {

inline constexpr int kImageChannels = 3;

enum class NetRole { generator, discriminator };
enum class LayerRole { base, grown, to_rgb, from_rgb };

struct LayerSpec {
  int id = 0;
  int filter_size = 3;
  int n_filters = 0;
  LayerRole role = LayerRole::base;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Stage {
  std::vector<LayerSpec> convs;
  LayerSpec rgb;  // to_rgb (G) or from_rgb (D), 1x1
  bool fade_in = false;

  friend bool operator==(const Stage&, const Stage&) = default;
};

struct NetworkSpec {
  NetRole role = NetRole::generator;
  int latent_dim = 0;      // generator only
  int d0 = 8;
  int base_channels = 0;   // G: dense output channels, D: channels fed to the dense head
  std::vector<Stage> stages;

  int resolution() const { return d0 << (static_cast<int>(stages.size()) - 1); }
  bool fading() const { return stages.size() >= 2 && stages.back().fade_in; }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct ArchPair {
  NetworkSpec g;
  NetworkSpec d;

  int resolution() const { return g.resolution(); }
  int num_stages() const { return static_cast<int>(g.stages.size()); }

  friend bool operator==(const ArchPair&, const ArchPair&) = default;
};

struct GrowthAction {
  enum class Kind { grow_g, grow_d, grow_both };
  Kind kind = Kind::grow_both;
  int filter_size = 0;  // unused for grow_both
  int n_filters = 0;

  static GrowthAction grow_g(int k, int n) { return {Kind::grow_g, k, n}; }
  static GrowthAction grow_d(int k, int n) { return {Kind::grow_d, k, n}; }
  static GrowthAction grow_both() { return {Kind::grow_both, 0, 0}; }

  // "G3x256", "D7x32", "B"
  std::string code() const;
  static GrowthAction parse(const std::string& code);

  friend bool operator==(const GrowthAction&, const GrowthAction&) = default;
};

struct ActionSpace {
  std::vector<int> filter_sizes{3, 7};
  std::vector<int> filter_counts{32, 64, 128, 256, 512, 1024};
  int target_resolution = 32;
  bool allow_grow_both = true;

  // Width of the convs added by grow_both is half the previous stage's
  // output width, floored at this value.
  int min_stage_channels() const;
  void validate() const;
};

struct BaseConfig {
  int d0 = 8;
  int latent_dim = 128;
  int base_channels = 128;
};

ArchPair base_pair(const BaseConfig& cfg);
// Throws ContractError naming the broken invariant.
void validate(const ArchPair& pair);

std::vector<GrowthAction> enumerate_actions(const ArchPair& pair, const ActionSpace& space);
std::vector<GrowthAction> enumerate_actions(const ArchPair& pair, int target_resolution);

ArchPair apply_action(const ArchPair& pair, const GrowthAction& action, const ActionSpace& space);

// The action that turns `parent` into `child`; nullopt when they are equal
// up to fade flags. Throws ContractError if no single action explains it.
std::optional<GrowthAction> derive_action(const ArchPair& parent, const ArchPair& child);

// ---- parameters -----------------------------------------------------------

struct ConvShape {
  std::string name;  // e.g. "g/stage1/layer2"
  int c_in = 0;
  int c_out = 0;
  int k = 1;
};

// Every conv of a network with its resolved input width, in forward order
// (rgb layers included).
std::vector<ConvShape> conv_shapes(const NetworkSpec& spec);
// Dense layer (in, out) of a network.
std::pair<int, int> dense_shape(const NetworkSpec& spec);

std::int64_t param_count(const NetworkSpec& spec);
double g2d_ratio(const ArchPair& pair);

using WeightSet = std::map<std::string, tensor::Tensor<float>>;

std::int64_t element_count(const WeightSet& ws);

struct PairWeights {
  WeightSet g;
  WeightSet d;
};

// He-normal weights, zero biases; every tensor draws from its own stream
// keyed by (seed, name).
PairWeights instantiate(const ArchPair& pair, std::uint64_t seed);

// Copies shared layers from the parent. Layers whose input width changed get
// the overlapping slice; everything else keeps its fresh values.
void inherit_weights(const ArchPair& child, PairWeights& child_ws, const ArchPair& parent,
                     const PairWeights& parent_ws);

// ---- serialization --------------------------------------------------------

nlohmann::json to_json(const ArchPair& pair);
ArchPair arch_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_from_json(const nlohmann::json& j);

}  // namespace dggan::arch
