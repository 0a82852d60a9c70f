#include "ricnn/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace ricnn {

namespace {

using nlohmann::json;

constexpr int kVersion = 1;

std::vector<char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<char> out((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed for " + path);
  return out;
}

void write_file(const std::string& path, const void* data, size_t n) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  const size_t written = std::fwrite(data, 1, n, f);
  const bool closed = std::fclose(f) == 0;
  if (written != n || !closed) throw IoError("short write to " + path);
}

json parse_manifest(const std::string& path) {
  const std::vector<char> bytes = read_file(path);
  json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw IoError("malformed JSON in " + path);
  if (j.value("format", "") != "ricnn-checkpoint" ||
      j.value("version", 0) != kVersion)
    throw IoError(path + " is not a recognized checkpoint manifest");
  return j;
}

template <class T>
const char* precision_tag() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace

std::string sha256_bytes(const void* data, size_t n) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr))
    throw IoError("sha256 digest failed");
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  const std::vector<char> bytes = read_file(path);
  return sha256_bytes(bytes.data(), bytes.size());
}

template <class T>
void save_checkpoint(const std::string& stem, Network<T>& net,
                     CheckpointMeta meta) {
  const auto params = net.params();
  std::vector<char> blob;
  json jp = json::array();
  size_t offset = 0;
  for (const auto& p : params) {
    const size_t bytes = p.w->size() * sizeof(T);
    jp.push_back({{"name", p.name},
                  {"count", p.w->size()},
                  {"offset", offset}});
    blob.resize(offset + bytes);
    std::memcpy(blob.data() + offset, p.w->data(), bytes);
    offset += bytes;
  }
  meta.bin_sha256 = sha256_bytes(blob.data(), blob.size());
  write_file(stem + ".bin", blob.data(), blob.size());

  json j = {{"format", "ricnn-checkpoint"},
            {"version", kVersion},
            {"arch", meta.arch},
            {"calibrator", to_string(meta.cal)},
            {"precision", precision_tag<T>()},
            {"in_channels", meta.in_channels},
            {"in_h", meta.in_h},
            {"in_w", meta.in_w},
            {"seed", meta.seed},
            {"param_count", net.param_count()},
            {"params", jp},
            {"bin_sha256", meta.bin_sha256}};
  const std::string text = j.dump(2) + "\n";
  write_file(stem + ".json", text.data(), text.size());
}

CheckpointMeta read_checkpoint_meta(const std::string& stem) {
  const json j = parse_manifest(stem + ".json");
  CheckpointMeta meta;
  meta.arch = j.at("arch").get<std::string>();
  meta.cal = parse_calibrator(j.at("calibrator").get<std::string>());
  meta.precision = j.at("precision").get<std::string>();
  meta.in_channels = j.at("in_channels").get<int64_t>();
  meta.in_h = j.at("in_h").get<int64_t>();
  meta.in_w = j.at("in_w").get<int64_t>();
  meta.seed = j.at("seed").get<uint64_t>();
  meta.bin_sha256 = j.at("bin_sha256").get<std::string>();
  return meta;
}

template <class T>
Network<T> load_checkpoint(const std::string& stem, CheckpointMeta* meta_out) {
  const json j = parse_manifest(stem + ".json");
  CheckpointMeta meta = read_checkpoint_meta(stem);
  if (meta.precision != precision_tag<T>())
    throw IoError(stem + " stores " + meta.precision + " weights, not " +
                  precision_tag<T>());

  Network<T> net(make_graph(meta.arch, meta.cal, meta.in_channels),
                 {1, meta.in_channels, meta.in_h, meta.in_w});
  const std::vector<char> blob = read_file(stem + ".bin");
  if (sha256_bytes(blob.data(), blob.size()) != meta.bin_sha256)
    throw IoError(stem + ".bin does not match the manifest hash");

  const auto params = net.params();
  const json& jp = j.at("params");
  if (jp.size() != params.size())
    throw IoError(stem + ": manifest lists " + std::to_string(jp.size()) +
                  " parameter groups, model has " +
                  std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const json& e = jp[i];
    const std::string name = e.at("name").get<std::string>();
    const size_t count = e.at("count").get<size_t>();
    const size_t offset = e.at("offset").get<size_t>();
    if (name != params[i].name || count != params[i].w->size())
      throw IoError(stem + ": parameter group " + std::to_string(i) +
                    " mismatch (" + name + " vs " + params[i].name + ")");
    if (offset + count * sizeof(T) > blob.size())
      throw IoError(stem + ".bin is too short for " + name);
    std::memcpy(params[i].w->data(), blob.data() + offset, count * sizeof(T));
  }
  if (meta_out) *meta_out = meta;
  return net;
}

template void save_checkpoint<float>(const std::string&, Network<float>&,
                                     CheckpointMeta);
template void save_checkpoint<double>(const std::string&, Network<double>&,
                                      CheckpointMeta);
template Network<float> load_checkpoint<float>(const std::string&,
                                               CheckpointMeta*);
template Network<double> load_checkpoint<double>(const std::string&,
                                                 CheckpointMeta*);

}  // namespace ricnn
