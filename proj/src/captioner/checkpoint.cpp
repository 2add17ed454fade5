#include "rest/captioner/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "rest/core/blob.hpp"
#include "rest/core/error.hpp"
#include "rest/core/random.hpp"

namespace rest {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'R', 'S', 'T', 'C'};

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}
}  // namespace

json to_json(const CaptionerConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"feature_dim", c.feature_dim}, {"model_dim", c.model_dim},
          {"ffn_dim", c.ffn_dim},       {"layers", c.layers},           {"max_len", c.max_len},
          {"seed", c.seed}};
}

CaptionerConfig captioner_config_from_json(const json& j) {
  CaptionerConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("captioner config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const ToyCaptioner& model, const std::filesystem::path& path, int round,
                     const json& extra) {
  std::vector<unsigned char> bytes(kMagic, kMagic + 4);
  le::put_u32(bytes, kCheckpointVersion);
  std::uint32_t count = 0;
  for_each_tensor(model.params, [&](const std::string&, const Mat&) { ++count; });
  le::put_u32(bytes, count);
  for_each_tensor(model.params, [&](const std::string& name, const Mat& m) {
    le::put_u32(bytes, static_cast<std::uint32_t>(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    le::put_u32(bytes, 2);
    le::put_u32(bytes, static_cast<std::uint32_t>(m.rows()));
    le::put_u32(bytes, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) le::put_f32(bytes, static_cast<float>(m.data()[i]));
  });
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kMissingFile, "cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  json side = extra;
  side["captioner"] = to_json(model.config);
  side["adapter_enabled"] = model.adapter_enabled;
  side["round"] = round;
  side["version"] = kCheckpointVersion;
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw Error(ErrorCode::kMissingFile, "cannot write checkpoint sidecar");
  out << side.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  std::ifstream side_in(sidecar_path(path));
  if (!side_in) throw Error(ErrorCode::kMissingFile, "missing checkpoint sidecar for " + path.string());
  LoadedCheckpoint out;
  try {
    side_in >> out.sidecar;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint sidecar: ") + e.what());
  }
  const CaptionerConfig config = captioner_config_from_json(out.sidecar.at("captioner"));
  out.model = ToyCaptioner::create(config, out.sidecar.value("adapter_enabled", true));
  out.round = out.sidecar.value("round", 0);

  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw Error(ErrorCode::kParse, "truncated checkpoint " + path.string());
  };
  auto u32 = [&] {
    need(4);
    const auto v = le::get_u32(bytes.data() + pos);
    pos += 4;
    return v;
  };
  need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::kParse, "bad checkpoint magic");
  pos = 4;
  if (u32() != kCheckpointVersion) throw Error(ErrorCode::kParse, "unsupported checkpoint version");
  const std::uint32_t count = u32();
  std::uint32_t expected = 0;
  for_each_tensor(out.model.params, [&](const std::string&, const Mat&) { ++expected; });
  if (count != expected) throw Error(ErrorCode::kDimMismatch, "checkpoint tensor count mismatch");

  for_each_tensor(out.model.params, [&](const std::string& name, Mat& m) {
    const std::uint32_t len = u32();
    need(len);
    const std::string stored(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    if (stored != name) throw Error(ErrorCode::kDimMismatch, "expected tensor " + name + ", found " + stored);
    if (u32() != 2) throw Error(ErrorCode::kParse, "tensor " + name + " has unsupported rank");
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    if (rows != m.rows() || cols != m.cols()) {
      throw Error(ErrorCode::kDimMismatch, "tensor " + name + " shape mismatch");
    }
    need(static_cast<std::size_t>(rows) * cols * 4);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = le::get_f32(bytes.data() + pos);
      pos += 4;
    }
  });
  if (pos != bytes.size()) throw Error(ErrorCode::kParse, "trailing bytes in checkpoint");
  return out;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace rest
