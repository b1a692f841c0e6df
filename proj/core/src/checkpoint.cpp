#include "interconnect/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "interconnect/config.hpp"

namespace interconnect {

static_assert(std::endian::native == std::endian::little, "checkpoint buffers assume a little-endian host");

using nlohmann::json;
using Kind = CheckpointError::Kind;


namespace {

struct TableEntry {
  std::string name;
  Shape shape;
  std::size_t byte_offset = 0;
};

template <typename T>
void append_buffer(std::vector<char>& blob, json& table, const std::string& name, const Shape& shape,
                   std::span<const T> values) {
  table.push_back(json{{"name", name}, {"shape", shape}, {"dtype", dtype_name<T>()}, {"byte_offset", blob.size()}});
  const std::size_t bytes = values.size() * sizeof(T);
  const std::size_t at = blob.size();
  blob.resize(at + bytes);
  std::memcpy(blob.data() + at, values.data(), bytes);
}

void write_file(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::Io, "cannot open " + path.string() + " for writing");
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw CheckpointError(Kind::Io, "failed writing " + path.string());
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const SpeechTranslator<T>& model, const TrainingState& state,
                     const Adam<T>* adam, std::uint64_t model_seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw CheckpointError(Kind::Io, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<char> blob;
  json table = json::array();
  for (const auto& e : model.params().entries()) {
    append_buffer<T>(blob, table, e.spec.name, e.spec.shape, e.tensor.data());
  }
  if (adam != nullptr) {
    for (const auto& m : adam->moments()) {
      const Shape shape = model.params().get(m.name).shape();
      append_buffer<T>(blob, table, "adam.m." + m.name, shape, m.m);
      append_buffer<T>(blob, table, "adam.v." + m.name, shape, m.v);
    }
  }

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["dtype"] = dtype_name<T>();
  manifest["model"] = model.config();
  manifest["model_seed"] = model_seed;
  manifest["strategy"] = to_string(state.strategy);
  manifest["step"] = state.step;
  manifest["schedule"] = state.schedule;
  manifest["rng"] = json{{"seed", state.rng.seed()}, {"counter", state.rng.counter()}};
  manifest["optimizer"] = json{{"steps", adam ? adam->steps() : 0},
                               {"beta1", adam ? adam->config().beta1 : AdamConfig{}.beta1},
                               {"beta2", adam ? adam->config().beta2 : AdamConfig{}.beta2},
                               {"eps", adam ? adam->config().eps : AdamConfig{}.eps}};
  manifest["params_bytes"] = blob.size();
  manifest["tensors"] = table;

  write_file(dir / "params.bin", blob.data(), blob.size());
  const std::string text = manifest.dump(2) + "\n";
  // The manifest goes last, via rename, so a crash never leaves a manifest
  // describing a half-written buffer.
  const auto tmp = dir / "manifest.json.tmp";
  write_file(tmp, text.data(), text.size());
  std::filesystem::rename(tmp, dir / "manifest.json", ec);
  if (ec) throw CheckpointError(Kind::Io, "cannot finalize manifest in " + dir.string() + ": " + ec.message());
}

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Trainer<T>& trainer, std::uint64_t model_seed) {
  TrainingState state{trainer.strategy(), trainer.step_index(), trainer.schedule(), trainer.rng()};
  save_checkpoint(dir, trainer.model(), state, &trainer.optimizer(), model_seed);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw CheckpointError(Kind::Io, "cannot open " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::Manifest, manifest_path.string() + ": " + e.what());
  }

  Checkpoint<T> ck;
  std::vector<TableEntry> table;
  std::size_t params_bytes = 0;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError(Kind::Version, "checkpoint format version " + std::to_string(version) +
                                               " is not supported (expected " +
                                               std::to_string(kCheckpointFormatVersion) + ")");
    }
    const auto dtype = manifest.at("dtype").get<std::string>();
    if (dtype != dtype_name<T>()) {
      throw CheckpointError(Kind::Manifest, "checkpoint holds " + dtype + ", requested " + dtype_name<T>());
    }
    overlay(manifest.at("model"), ck.model_config);
    ck.model_seed = manifest.at("model_seed").get<std::uint64_t>();
    ck.state.strategy = freeze_strategy_from_string(manifest.at("strategy").get<std::string>());
    ck.state.step = manifest.at("step").get<std::size_t>();
    overlay(manifest.at("schedule"), ck.state.schedule);
    const auto& rng = manifest.at("rng");
    ck.state.rng = CounterRng(rng.at("seed").get<std::uint64_t>(), rng.at("counter").get<std::uint64_t>());
    ck.optimizer_steps = manifest.at("optimizer").at("steps").get<std::uint64_t>();
    params_bytes = manifest.at("params_bytes").get<std::size_t>();
    for (const auto& t : manifest.at("tensors")) {
      if (t.at("dtype").get<std::string>() != dtype_name<T>()) {
        throw CheckpointError(Kind::Manifest, "tensor " + t.at("name").get<std::string>() + " has a foreign dtype");
      }
      table.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>(), t.at("byte_offset").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::Manifest, manifest_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::Manifest, manifest_path.string() + ": " + e.what());
  }

  const auto bin_path = dir / "params.bin";
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(bin_path, ec);
  if (ec) throw CheckpointError(Kind::Io, "cannot stat " + bin_path.string() + ": " + ec.message());
  if (file_size != params_bytes) {
    throw CheckpointError(Kind::Truncated, bin_path.string() + " holds " + std::to_string(file_size) +
                                               " bytes, manifest declares " + std::to_string(params_bytes));
  }
  std::vector<char> blob(file_size);
  {
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin || !bin.read(blob.data(), static_cast<std::streamsize>(file_size))) {
      throw CheckpointError(Kind::Io, "cannot read " + bin_path.string());
    }
  }

  std::map<std::string, const TableEntry*> by_name;
  for (const auto& t : table) {
    if (t.byte_offset + shape_numel(t.shape) * sizeof(T) > blob.size()) {
      throw CheckpointError(Kind::Truncated, "tensor " + t.name + " extends past the end of params.bin");
    }
    if (!by_name.emplace(t.name, &t).second) {
      throw CheckpointError(Kind::Manifest, "tensor " + t.name + " listed twice");
    }
  }
  auto read = [&](const TableEntry& t) {
    std::vector<T> values(shape_numel(t.shape));
    std::memcpy(values.data(), blob.data() + t.byte_offset, values.size() * sizeof(T));
    return values;
  };

  ParamLayout layout;
  try {
    layout = model_layout(ck.model_config);
  } catch (const Error& e) {
    throw CheckpointError(Kind::Manifest, std::string("stored model config is invalid: ") + e.what());
  }
  for (const auto& spec : layout) {
    const auto it = by_name.find(spec.name);
    if (it == by_name.end()) throw CheckpointError(Kind::MissingTensor, "checkpoint lacks tensor " + spec.name);
    if (it->second->shape != spec.shape) {
      throw CheckpointError(Kind::ShapeMismatch, "tensor " + spec.name + " stored as " +
                                                     shape_str(it->second->shape) + ", model expects " +
                                                     shape_str(spec.shape));
    }
    ck.params.emplace_back(spec.name, read(*it->second));
    const auto m = by_name.find("adam.m." + spec.name);
    const auto v = by_name.find("adam.v." + spec.name);
    if ((m == by_name.end()) != (v == by_name.end())) {
      throw CheckpointError(Kind::MissingTensor, "checkpoint holds only one Adam moment of " + spec.name);
    }
    if (m != by_name.end()) {
      if (m->second->shape != spec.shape || v->second->shape != spec.shape) {
        throw CheckpointError(Kind::ShapeMismatch, "Adam moments of " + spec.name + " do not match its shape");
      }
      ck.moments.push_back({spec.name, read(*m->second), read(*v->second)});
    }
  }
  return ck;
}

template <typename T>
SpeechTranslator<T> Checkpoint<T>::build_model() const {
  SpeechTranslator<T> model(model_config, model_seed);
  restore_into(model);
  return model;
}

template <typename T>
void Checkpoint<T>::restore_into(SpeechTranslator<T>& model) const {
  auto& entries = model.params().entries();
  if (entries.size() != params.size()) {
    throw CheckpointError(Kind::ShapeMismatch, "checkpoint has " + std::to_string(params.size()) +
                                                   " parameters, model has " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].spec.name != params[i].first || entries[i].tensor.numel() != params[i].second.size()) {
      throw CheckpointError(Kind::ShapeMismatch, "parameter " + entries[i].spec.name + " does not match checkpoint");
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::copy(params[i].second.begin(), params[i].second.end(), entries[i].tensor.data().begin());
  }
}

template <typename T>
void Checkpoint<T>::restore_into(Trainer<T>& trainer) const {
  if (trainer.strategy() != state.strategy) {
    throw ContractError(std::string("checkpoint was trained with strategy ") + to_string(state.strategy) +
                        ", trainer uses " + to_string(trainer.strategy()));
  }
  restore_into(trainer.model());
  trainer.optimizer().restore(optimizer_steps, moments);
  trainer.restore(state.step, state.rng);
}

#define INTERCONNECT_INSTANTIATE(T)                                                                           \
  template struct Checkpoint<T>;                                                                              \
  template void save_checkpoint<T>(const std::filesystem::path&, const SpeechTranslator<T>&, const TrainingState&, \
                                   const Adam<T>*, std::uint64_t);                                            \
  template void save_checkpoint<T>(const std::filesystem::path&, const Trainer<T>&, std::uint64_t);           \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);

INTERCONNECT_INSTANTIATE(float)
INTERCONNECT_INSTANTIATE(double)

#undef INTERCONNECT_INSTANTIATE

}  // namespace interconnect
