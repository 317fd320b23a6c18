#include "dlgan/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dlgan/errors.hpp"
#include "dlgan/model.hpp"

namespace dlgan {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'L', 'G', 'A', 'N', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

std::vector<double> to_vector(const RowVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RowVector to_row(const std::vector<double>& v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

}  // namespace

std::uint32_t crc32_of(const void* data, std::size_t size) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

Checkpoint Checkpoint::capture(DlganModel& model, const NormStats& stats,
                               const std::vector<std::string>& feature_names, const std::string& rng_state,
                               int phase, long epoch) {
  Checkpoint c;
  c.config = model.config();
  c.stats = stats;
  c.feature_names = feature_names;
  c.rng_state = rng_state;
  c.phase = phase;
  c.epoch = epoch;
  for (Parameter* p : model.all_params()) c.params.emplace_back(p->name, p->value);
  return c;
}

void Checkpoint::restore(DlganModel& model) const {
  std::map<std::string, const Matrix*> by_name;
  for (const auto& [name, value] : params) by_name[name] = &value;
  for (Parameter* p : model.all_params()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw Error(ErrorKind::CorruptFile, "missing parameter " + p->name);
    if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols()) {
      throw Error(ErrorKind::CorruptFile, "shape mismatch for " + p->name);
    }
    p->value = *it->second;
  }
}

std::string Checkpoint::serialize() const {
  std::string payload;
  json table = json::array();
  for (const auto& [name, value] : params) {
    const std::size_t offset = payload.size();
    for (Eigen::Index i = 0; i < value.size(); ++i) put_le(payload, static_cast<float>(value.data()[i]));
    table.push_back({{"name", name},
                     {"rows", value.rows()},
                     {"cols", value.cols()},
                     {"offset", offset},
                     {"crc32", crc32_of(payload.data() + offset, payload.size() - offset)}});
  }
  json manifest = {
      {"format_version", kFormatVersion},
      {"config", config.to_json()},
      {"norm_min", to_vector(stats.min)},
      {"norm_max", to_vector(stats.max)},
      {"feature_names", feature_names},
      {"rng_state", rng_state},
      {"phase", phase},
      {"epoch", epoch},
      {"params", table},
      {"payload_bytes", payload.size()},
      {"payload_crc32", crc32_of(payload.data(), payload.size())},
  };
  const std::string text = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint64_t>(out, text.size());
  put_le<std::uint32_t>(out, crc32_of(text.data(), text.size()));
  out += text;
  out += payload;
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  constexpr std::size_t header = sizeof(kMagic) + 8 + 4;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::CorruptFile, "not a checkpoint (bad magic or truncated header)");
  }
  const auto len = get_le<std::uint64_t>(bytes, sizeof(kMagic));
  const auto crc = get_le<std::uint32_t>(bytes, sizeof(kMagic) + 8);
  if (bytes.size() < header + len) throw Error(ErrorKind::CorruptFile, "truncated manifest");
  const std::string text = bytes.substr(header, len);
  if (crc32_of(text.data(), text.size()) != crc) throw Error(ErrorKind::CorruptFile, "manifest checksum");

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptFile, std::string("manifest: ") + e.what());
  }
  const int version = manifest.value("format_version", -1);
  if (version != kFormatVersion) {
    throw Error(ErrorKind::VersionMismatch,
                "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kFormatVersion));
  }
  const std::string payload = bytes.substr(header + len);
  if (payload.size() != manifest.at("payload_bytes").get<std::size_t>()) {
    throw Error(ErrorKind::CorruptFile, "payload is " + std::to_string(payload.size()) + " bytes, expected " +
                                            std::to_string(manifest.at("payload_bytes").get<std::size_t>()));
  }
  if (crc32_of(payload.data(), payload.size()) != manifest.at("payload_crc32").get<std::uint32_t>()) {
    throw Error(ErrorKind::CorruptFile, "payload checksum");
  }

  Checkpoint c;
  try {
    c.config = TrainingConfig::from_json(manifest.at("config"));
    c.stats.min = to_row(manifest.at("norm_min").get<std::vector<double>>());
    c.stats.max = to_row(manifest.at("norm_max").get<std::vector<double>>());
    c.feature_names = manifest.at("feature_names").get<std::vector<std::string>>();
    c.rng_state = manifest.at("rng_state").get<std::string>();
    c.phase = manifest.at("phase").get<int>();
    c.epoch = manifest.at("epoch").get<long>();
    for (const json& entry : manifest.at("params")) {
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = static_cast<std::size_t>(rows * cols);
      if (offset + n * sizeof(float) > payload.size()) throw Error(ErrorKind::CorruptFile, "block out of range");
      if (crc32_of(payload.data() + offset, n * sizeof(float)) != entry.at("crc32").get<std::uint32_t>()) {
        throw Error(ErrorKind::CorruptFile, "block checksum for " + entry.at("name").get<std::string>());
      }
      Matrix m(rows, cols);
      for (std::size_t i = 0; i < n; ++i) m.data()[i] = get_le<float>(payload, offset + i * sizeof(float));
      c.params.emplace_back(entry.at("name").get<std::string>(), std::move(m));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptFile, std::string("manifest: ") + e.what());
  }
  return c;
}

void Checkpoint::save(const std::string& path) const {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  const std::string bytes = serialize();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::FileNotFound, path);
  std::stringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

}  // namespace dlgan
