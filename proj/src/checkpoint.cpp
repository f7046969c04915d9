// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "vaealign/errors.hpp"
#include "vaealign/trainer.hpp"

namespace vaealign {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

TensorFile to_tensor(const std::vector<std::size_t>& shape, const std::vector<double>& v) {
  TensorFile t;
  t.shape.assign(shape.begin(), shape.end());
  t.data.assign(v.begin(), v.end());
  return t;
}

void load_into(const fs::path& path, const Param& p, std::vector<double>& out) {
  const TensorFile t = read_tensor(path);
  if (!std::equal(t.shape.begin(), t.shape.end(), p.shape.begin(), p.shape.end()))
    throw ValidationError(path.string() + ": shape does not match parameter " + p.name);
  out.assign(t.data.begin(), t.data.end());
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  if (!ckpt.model) throw ValidationError("checkpoint has no model");
  fs::create_directories(dir / "params");
  fs::create_directories(dir / "adam" / "m");
  fs::create_directories(dir / "adam" / "v");
  const auto& params = ckpt.model->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = params.at(i);
    write_tensor(dir / "params" / (p.name + ".ftf"), to_tensor(p.shape, p.value));
    if (i < ckpt.adam.m.size()) {
      write_tensor(dir / "adam" / "m" / (p.name + ".ftf"), to_tensor(p.shape, ckpt.adam.m[i]));
      write_tensor(dir / "adam" / "v" / (p.name + ".ftf"), to_tensor(p.shape, ckpt.adam.v[i]));
    }
  }
  ordered_json meta;
  meta["config"] = to_json(ckpt.config);
  meta["config_hash"] = config_hash(ckpt.config);
  meta["step"] = ckpt.step;
  meta["seed"] = ckpt.config.seed;
  const fs::path meta_path = dir / "meta.json";
  std::ofstream out(meta_path, std::ios::trunc);
  if (!out) throw IoError(meta_path.string(), "cannot open for writing");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError(meta_path.string(), "write failed");
}

Checkpoint load_checkpoint(const fs::path& dir, const TrainConfig* expected) {
  const fs::path meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError(meta_path.string(), "cannot open checkpoint metadata");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(meta_path.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  std::string stored_hash;
  try {
    ckpt.config = train_config_from_json(meta.at("config"));
    stored_hash = meta.at("config_hash").get<std::string>();
    ckpt.step = meta.at("step").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(meta_path.string() + ": " + e.what());
  }
  ckpt.config.validate();
  if (config_hash(ckpt.config) != stored_hash)
    throw ValidationError(dir.string() + ": config hash does not match stored config");
  if (expected && config_hash(*expected) != stored_hash)
    throw ValidationError(dir.string() + ": checkpoint architecture differs from the requested config");

  ckpt.model = std::make_shared<VaeModel>(ckpt.config.encoder, ckpt.config.projection, 0);
  auto& params = ckpt.model->params();
  ckpt.adam.m.resize(params.size());
  ckpt.adam.v.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = params.at(i);
    load_into(dir / "params" / (p.name + ".ftf"), p, p.value);
    const fs::path m = dir / "adam" / "m" / (p.name + ".ftf");
    if (fs::exists(m)) {
      load_into(m, p, ckpt.adam.m[i]);
      load_into(dir / "adam" / "v" / (p.name + ".ftf"), p, ckpt.adam.v[i]);
    } else {
      ckpt.adam.m[i].assign(p.value.size(), 0.0);
      ckpt.adam.v[i].assign(p.value.size(), 0.0);
    }
  }
  return ckpt;
}

}  // namespace vaealign
