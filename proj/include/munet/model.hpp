#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "munet/unet.hpp"

namespace munet {

// Nested multiresolution stack of encoder-decoder nets. Level 0 is the
// finest. Evaluation runs deepest-first: each finer level consumes its own
// image plane concatenated with the bilinearly upsampled (and re-normalized)
// class probabilities of the level below it. The deepest level sees only its
// image, so its output is unaffected by anything at finer scales.
template <typename T>
struct MUNet {
  ModelConfig cfg;
  std::vector<UNet<T>> nets;      // index m: 0 = finest level
  std::vector<Tensor<T>> inputs;  // forward input per level
  std::vector<Tensor<T>> up_raw;  // bilinear2x(probs[m+1]) before renorm
  Workspace<T> ws;

  explicit MUNet(const ModelConfig& c) : cfg(c) {
    cfg.validate();
    nets.reserve(cfg.levels);
    for (int m = 0; m < cfg.levels; ++m) {
      int in_c = (m == cfg.levels - 1) ? 1 : 1 + cfg.classes;
      nets.emplace_back(cfg.depth_of_level(m), in_c, cfg.base_channels, cfg.classes);
    }
    inputs.resize(cfg.levels);
    up_raw.resize(cfg.levels);
  }

  void init(std::uint64_t seed) {
    Rng rng(seed, 0x6d756e6574ull);
    for (auto& n : nets) n.init(rng);
  }

  // images[m]: [N, 1, h_m, w_m] with h_m = h_0 >> m (and likewise for w).
  void forward(const std::vector<Tensor<T>>& images, bool training) {
    if (static_cast<int>(images.size()) != cfg.levels)
      throw ConfigError("MUNet: expected one image tensor per level");
    for (int m = 0; m < cfg.levels; ++m) {
      if (images[m].c != 1) throw ConfigError("MUNet: image tensors must have 1 channel");
      if (m > 0 && (images[m].h * 2 != images[m - 1].h || images[m].w * 2 != images[m - 1].w))
        throw ConfigError("MUNet: level dims must halve exactly");
    }
    for (int m = cfg.levels - 1; m >= 0; --m) {
      if (m == cfg.levels - 1) {
        inputs[m] = images[m];
      } else {
        Bilinear2x<T>::forward(nets[m + 1].probs, up_raw[m]);
        Tensor<T> renormed;
        SimplexRenorm<T>::forward(up_raw[m], renormed);
        concat_channels(images[m], renormed, inputs[m]);
      }
      nets[m].forward(inputs[m], ws, training);
    }
  }

  const Tensor<T>& probs(int level) const { return nets[level].probs; }

  // g_probs[m]: dLoss/d(probs of level m); pass zero tensors for levels with
  // no supervision term. Cross-level paths are accumulated finest-first.
  void backward(const std::vector<Tensor<T>>& g_probs) {
    if (static_cast<int>(g_probs.size()) != cfg.levels)
      throw ConfigError("MUNet: expected one gradient tensor per level");
    std::vector<Tensor<T>> g_total(g_probs.begin(), g_probs.end());
    for (int m = 0; m < cfg.levels; ++m) {
      Tensor<T> g_in;
      nets[m].backward(g_total[m], g_in, ws);
      if (m < cfg.levels - 1) {
        Tensor<T> g_img, g_renorm, g_upraw, g_coarse;
        split_channels(g_in, 1, g_img, g_renorm);
        SimplexRenorm<T>::backward(up_raw[m], g_renorm, g_upraw);
        Bilinear2x<T>::backward(g_upraw, nets[m + 1].probs.h, nets[m + 1].probs.w,
                                g_coarse);
        accumulate(g_total[m + 1], g_coarse);
      }
    }
  }

  void zero_grad() {
    for (auto& n : nets) n.zero_grad();
  }

  template <typename Fn>
  void visit_params(Fn&& fn) {
    for (int m = 0; m < cfg.levels; ++m)
      nets[m].visit_params("net" + std::to_string(m), fn);
  }
  template <typename Fn>
  void visit_buffers(Fn&& fn) {
    for (int m = 0; m < cfg.levels; ++m)
      nets[m].visit_buffers("net" + std::to_string(m), fn);
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit_params([&](const ParamRef<T>& p) { n += p.value->size(); });
    return n;
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: 8-byte magic, little-endian u64 JSON header length, JSON
// header (model config + tensor manifest), then raw float32 tensor data in
// manifest order. Parameters first, then batch-norm running statistics.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'M', 'U', 'N', 'E', 'T', 'C', 'K', '1'};

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"levels", cfg.levels},
                        {"classes", cfg.classes},
                        {"base_channels", cfg.base_channels},
                        {"max_depth", cfg.max_depth},
                        {"input_window", cfg.input_window}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.levels = j.at("levels").get<int>();
  cfg.classes = j.at("classes").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.max_depth = j.at("max_depth").get<int>();
  cfg.input_window = j.at("input_window").get<int>();
  cfg.validate();
  return cfg;
}

template <typename T>
void save_checkpoint(const std::string& path, MUNet<T>& model) {
  std::vector<std::pair<std::string, const Tensor<T>*>> entries;
  model.visit_params([&](const ParamRef<T>& p) { entries.emplace_back(p.name, p.value); });
  model.visit_buffers([&](const BufferRef<T>& b) { entries.emplace_back(b.name, b.value); });

  nlohmann::json header;
  header["format"] = "munet-checkpoint";
  header["scalar"] = "f32";
  header["config"] = model_config_to_json(model.cfg);
  auto& manifest = header["tensors"] = nlohmann::json::array();
  for (auto& [name, t] : entries)
    manifest.push_back({{"name", name}, {"shape", {t->n, t->c, t->h, t->w}}});
  std::string js = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  std::uint64_t len = js.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  std::vector<float> buf;
  for (auto& [name, t] : entries) {
    buf.resize(t->size());
    for (std::size_t i = 0; i < t->size(); ++i) buf[i] = static_cast<float>(t->v[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError("checkpoint write failed: " + path);
}

inline nlohmann::json read_checkpoint_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("not a model checkpoint: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || len == 0 || len > (std::uint64_t(1) << 30))
    throw DataError("corrupt checkpoint header: " + path);
  std::string js(len, '\0');
  in.read(js.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("corrupt checkpoint header: " + path);
  return nlohmann::json::parse(js);
}

inline ModelConfig checkpoint_model_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return model_config_from_json(read_checkpoint_header(in, path).at("config"));
}

// Loads weights into an already-built model; the stored config must match.
template <typename T>
void load_checkpoint(const std::string& path, MUNet<T>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json header = read_checkpoint_header(in, path);
  ModelConfig stored = model_config_from_json(header.at("config"));
  if (!(stored == model.cfg))
    throw ConfigError("checkpoint model config does not match: " + path);

  std::vector<std::pair<std::string, Tensor<T>*>> entries;
  model.visit_params([&](const ParamRef<T>& p) { entries.emplace_back(p.name, p.value); });
  model.visit_buffers([&](const BufferRef<T>& b) { entries.emplace_back(b.name, b.value); });

  const auto& manifest = header.at("tensors");
  if (manifest.size() != entries.size())
    throw DataError("checkpoint tensor manifest size mismatch: " + path);
  std::vector<float> buf;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& item = manifest[i];
    auto& [name, t] = entries[i];
    if (item.at("name").get<std::string>() != name)
      throw DataError("checkpoint tensor order mismatch at " + name);
    auto shape = item.at("shape").get<std::vector<int>>();
    if (shape.size() != 4 || shape[0] != t->n || shape[1] != t->c ||
        shape[2] != t->h || shape[3] != t->w)
      throw DataError("checkpoint tensor shape mismatch at " + name);
    buf.resize(t->size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw DataError("checkpoint truncated at " + name);
    for (std::size_t j = 0; j < t->size(); ++j) t->v[j] = static_cast<T>(buf[j]);
  }
}

// Builds a model from the config stored in the checkpoint, then loads it.
template <typename T = float>
MUNet<T> load_model(const std::string& path) {
  MUNet<T> model(checkpoint_model_config(path));
  load_checkpoint(path, model);
  return model;
}

}  // namespace munet
