#include "skinrf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "config_json.hpp"
#include "skinrf/error.hpp"

namespace skinrf {
namespace {

constexpr char kMagic[8] = {'S', 'K', 'R', 'F', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

void append_doubles(std::string& out, std::span<const double> v) {
  const auto* p = reinterpret_cast<const char*>(v.data());
  out.append(p, v.size() * sizeof(double));
}

std::vector<double> take_doubles(const std::string& in, std::size_t& pos, std::size_t count, const std::string& what) {
  const std::size_t bytes = count * sizeof(double);
  if (in.size() - pos < bytes) throw ParseError("checkpoint truncated in " + what);
  std::vector<double> v(count);
  std::memcpy(v.data(), in.data() + pos, bytes);
  pos += bytes;
  return v;
}

template <typename T>
void append_pod(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take_pod(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw ParseError("checkpoint truncated in the preamble");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const AdamState* adam, long iteration,
                     const NovelPoseSet* novel) {
  const ParamStore& store = model.params();
  std::string payload;
  append_doubles(payload, store.values());
  if (adam) {
    if (adam->m.size() != store.size() || adam->v.size() != store.size()) {
      throw StructuralError("optimizer state does not match the parameter count");
    }
    append_doubles(payload, adam->m);
    append_doubles(payload, adam->v);
  }

  jsonio::json h;
  h["model_config"] = jsonio::to_json(model.config());
  jsonio::json blocks = jsonio::json::array();
  for (const ParamBlock& b : store.blocks()) {
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"trainable", b.trainable}});
  }
  h["blocks"] = std::move(blocks);
  h["param_count"] = store.size();
  h["iteration"] = iteration;
  if (adam) {
    h["adam"] = {{"step_count", adam->step_count}, {"beta1", adam->beta1}, {"beta2", adam->beta2},
                 {"epsilon", adam->epsilon}};
  } else {
    h["adam"] = nullptr;
  }
  if (novel) {
    jsonio::json poses = jsonio::json::array();
    for (const Pose& p : novel->poses) poses.push_back(jsonio::to_json(p));
    h["novel"] = {{"poses", std::move(poses)}, {"appearance", novel->appearance}};
  } else {
    h["novel"] = nullptr;
  }
  h["payload_fnv1a"] = fnv1a(payload);
  const std::string header = h.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  append_pod<std::uint32_t>(bytes, kCheckpointVersion);
  append_pod<std::uint64_t>(bytes, header.size());
  bytes += header;
  bytes += payload;

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw UsageError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(where + ": not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take_pod<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw ParseError(where + ": checkpoint version " + std::to_string(version) + ", expected " +
                     std::to_string(kCheckpointVersion));
  }
  const auto header_size = take_pod<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_size) throw ParseError(where + ": checkpoint truncated in the header");
  const jsonio::json h = jsonio::parse(bytes.substr(pos, header_size), where);
  pos += header_size;
  const jsonio::Reader r(h, "$");

  ModelConfig config;
  jsonio::read_into(r["model_config"], config);
  config.validate();

  std::vector<ParamBlock> blocks;
  const jsonio::Reader rb = r["blocks"];
  std::size_t offset = 0;
  for (std::size_t i = 0; i < rb.size(); ++i) {
    const jsonio::Reader b = rb.at(i);
    ParamBlock pb;
    pb.name = b["name"].string();
    pb.rows = b["rows"].integer();
    pb.cols = b["cols"].integer();
    pb.trainable = b["trainable"].boolean();
    if (pb.rows < 0 || pb.cols < 0) b.fail("negative block shape");
    pb.offset = offset;
    offset += pb.size();
    blocks.push_back(std::move(pb));
  }
  const auto count = static_cast<std::size_t>(r["param_count"].integer64());
  if (count != offset) r.fail("param_count " + std::to_string(count) + " disagrees with the layout (" +
                              std::to_string(offset) + ")");

  const std::string payload = bytes.substr(pos);
  if (!r["payload_fnv1a"].raw().is_number_unsigned() || r["payload_fnv1a"].raw().get<std::uint64_t>() != fnv1a(payload)) {
    // Size problems are reported before the checksum so truncation reads as truncation.
    const bool has_adam = !r["adam"].raw().is_null();
    const std::size_t expected = count * sizeof(double) * (has_adam ? 3 : 1);
    if (payload.size() < expected) throw ParseError(where + ": checkpoint truncated in the payload");
    throw ParseError(where + ": checkpoint payload checksum mismatch");
  }
  std::size_t ppos = 0;
  std::vector<double> values = take_doubles(payload, ppos, count, "parameters");

  std::optional<AdamState> adam;
  if (!r["adam"].raw().is_null()) {
    const jsonio::Reader ra = r["adam"];
    AdamState a;
    a.step_count = static_cast<long>(ra["step_count"].integer64());
    a.beta1 = ra["beta1"].number();
    a.beta2 = ra["beta2"].number();
    a.epsilon = ra["epsilon"].number();
    a.m = take_doubles(payload, ppos, count, "Adam first moments");
    a.v = take_doubles(payload, ppos, count, "Adam second moments");
    adam = std::move(a);
  }
  if (ppos != payload.size()) throw ParseError(where + ": " + std::to_string(payload.size() - ppos) + " trailing bytes");

  Checkpoint c{Model(config, ParamStore::from_layout(std::move(blocks), std::move(values))), std::move(adam),
               static_cast<long>(r["iteration"].integer64()), std::nullopt};
  if (!r["novel"].raw().is_null()) {
    const jsonio::Reader rn = r["novel"];
    NovelPoseSet novel;
    const jsonio::Reader poses = rn["poses"];
    for (std::size_t i = 0; i < poses.size(); ++i) novel.poses.push_back(jsonio::pose_from(poses.at(i), config.part_count));
    novel.appearance = rn["appearance"].integers();
    if (novel.appearance.size() != novel.poses.size()) rn.fail("one appearance frame per novel pose expected");
    if (static_cast<int>(novel.poses.size()) != c.model.novel_count()) {
      rn.fail(std::to_string(novel.poses.size()) + " novel poses but " + std::to_string(c.model.novel_count()) +
              " novel codes");
    }
    c.novel = std::move(novel);
  }
  return c;
}

}  // namespace skinrf
