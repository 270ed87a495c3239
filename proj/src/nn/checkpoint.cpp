#include "tabseq/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tabseq/errors.hpp"

namespace tabseq::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'A', 'B', 'S', 'E', 'Q', 'C', 'K'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw IoError("checkpoint truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ck) {
  const std::size_t width = ck.dtype == DType::F32 ? 4 : 8;
  nlohmann::json header;
  header["model"] = ck.model;
  header["vocab_hash"] = ck.vocab_hash;
  header["seed"] = ck.seed;
  header["dtype"] = ck.dtype == DType::F32 ? "f32" : "f64";
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : ck.params) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape}, {"offset", offset}, {"frozen", p.frozen}});
    offset += p.value.size() * width;
  }
  header["tensors"] = tensors;
  const std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  out.reserve(out.size() + offset);
  for (const auto& p : ck.params) {
    for (double v : p.value.data) {
      if (ck.dtype == DType::F32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  return out;
}

Checkpoint checkpoint_from_bytes(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != Checkpoint::kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = take<std::uint64_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw IoError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  pos += hlen;
  Checkpoint ck;
  ck.model = header.at("model");
  ck.vocab_hash = header.at("vocab_hash").get<std::string>();
  ck.seed = header.at("seed").get<std::uint64_t>();
  const auto dtype = header.at("dtype").get<std::string>();
  if (dtype != "f32" && dtype != "f64") throw IoError("unknown checkpoint dtype " + dtype);
  ck.dtype = dtype == "f32" ? DType::F32 : DType::F64;
  const std::size_t width = ck.dtype == DType::F32 ? 4 : 8;
  const std::size_t base = pos;
  for (const auto& t : header.at("tensors")) {
    Shape shape = t.at("shape").get<Shape>();
    std::size_t at = base + t.at("offset").get<std::size_t>();
    Tensor value(shape);
    if (at + value.size() * width > bytes.size()) throw IoError("checkpoint data truncated");
    for (auto& v : value.data) v = ck.dtype == DType::F32 ? static_cast<double>(take<float>(bytes, at)) : take<double>(bytes, at);
    const std::size_t i = ck.params.add(t.at("name").get<std::string>(), std::move(value));
    ck.params[i].frozen = t.value("frozen", false);
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  const std::string b = checkpoint_bytes(ck);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

std::size_t copy_matching(const ParamSet& src, ParamSet& dst) {
  std::size_t n = 0;
  for (auto& p : dst) {
    auto i = src.find(p.name);
    if (i && src[*i].value.shape == p.value.shape) {
      p.value = src[*i].value;
      ++n;
    }
  }
  return n;
}

}  // namespace tabseq::nn
