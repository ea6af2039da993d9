#include "modeseq/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace modeseq {

using nlohmann::json;

namespace {

constexpr char kMagic[5] = {'M', 'S', 'E', 'Q', '1'};

void write_blob(std::ofstream& out, const Array& a, int dtype_size) {
  if (dtype_size == 4) {
    std::vector<float> buf(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) buf[i] = static_cast<float>(a.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
}

void read_blob(std::ifstream& in, Array& a, int dtype_size) {
  if (dtype_size == 4) {
    std::vector<float> buf(a.data.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] = static_cast<double>(buf[i]);
  } else {
    in.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  if (!in) throw checkpoint_error("checkpoint truncated while reading blobs");
}

json read_manifest(std::ifstream& in, int& dtype_size) {
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0)
    throw checkpoint_error("not a checkpoint file (bad magic)");
  uint8_t ds = 0;
  in.read(reinterpret_cast<char*>(&ds), 1);
  if (!in || (ds != 4 && ds != 8)) throw checkpoint_error("bad checkpoint dtype");
  dtype_size = ds;
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw checkpoint_error("checkpoint truncated (manifest length)");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw checkpoint_error("checkpoint truncated (manifest)");
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw checkpoint_error(std::string("bad checkpoint manifest: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps, const AdamW& opt,
                     int64_t epoch, const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw checkpoint_error("cannot open '" + path + "' for writing");
  int dtype_size = precision() == Precision::f32 ? 4 : 8;

  json manifest;
  manifest["epoch"] = epoch;
  manifest["opt"] = {{"step", opt.step_count},
                     {"base_lr", opt.base_lr},
                     {"weight_decay", opt.weight_decay}};
  manifest["config"] = config_echo;
  manifest["params"] = json::array();
  for (const ParamStore::Entry& e : ps.entries)
    manifest["params"].push_back({{"name", e.name}, {"shape", e.value.shape}});
  std::string text = manifest.dump();

  out.write(kMagic, 5);
  uint8_t ds = static_cast<uint8_t>(dtype_size);
  out.write(reinterpret_cast<const char*>(&ds), 1);
  uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ParamStore::Entry& e : ps.entries) {
    write_blob(out, e.value, dtype_size);
    write_blob(out, e.m, dtype_size);
    write_blob(out, e.v, dtype_size);
  }
  out.flush();
  if (!out) throw checkpoint_error("write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path, ParamStore& ps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot open '" + path + "'");
  int dtype_size = 0;
  json manifest = read_manifest(in, dtype_size);

  const json& params = manifest.at("params");
  if (params.size() != ps.entries.size())
    throw checkpoint_error("checkpoint parameter count does not match the model");
  for (size_t i = 0; i < ps.entries.size(); ++i) {
    ParamStore::Entry& e = ps.entries[i];
    const json& pj = params[i];
    if (pj.at("name").get<std::string>() != e.name)
      throw checkpoint_error("checkpoint parameter '" + pj.at("name").get<std::string>() +
                             "' does not match expected '" + e.name + "'");
    if (pj.at("shape").get<std::vector<int64_t>>() != e.value.shape)
      throw checkpoint_error("checkpoint shape mismatch for '" + e.name + "'");
    read_blob(in, e.value, dtype_size);
    read_blob(in, e.m, dtype_size);
    read_blob(in, e.v, dtype_size);
  }

  LoadedCheckpoint lc;
  lc.epoch = manifest.at("epoch").get<int64_t>();
  lc.opt.step_count = manifest.at("opt").at("step").get<int64_t>();
  lc.opt.base_lr = manifest.at("opt").at("base_lr").get<double>();
  lc.opt.weight_decay = manifest.at("opt").at("weight_decay").get<double>();
  lc.config_echo = manifest.at("config").get<std::string>();
  return lc;
}

std::string read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot open '" + path + "'");
  int dtype_size = 0;
  json manifest = read_manifest(in, dtype_size);
  return manifest.at("config").get<std::string>();
}

}  // namespace modeseq
