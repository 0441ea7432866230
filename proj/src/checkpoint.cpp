#include "mmnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mmnet {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'N', 'E', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++]))
           << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++]))
           << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

Checkpoint snapshot(const ParamRegistry& params, std::uint64_t config_digest) {
  Checkpoint ckpt;
  ckpt.config_digest = config_digest;
  for (const ParamEntry& e : params.entries()) {
    Tensor copy = Tensor::from_vector(
        e.tensor.shape(), {e.tensor.data().begin(), e.tensor.data().end()});
    ckpt.tensors.push_back({e.name, std::move(copy)});
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u64(out, ckpt.config_digest);
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const ParamEntry& e : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.append(e.name);
    const Shape& s = e.tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    for (int d : s) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : e.tensor.data()) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r(buf);
  if (r.bytes(8) != std::string(kMagic, sizeof(kMagic)))
    throw IoError("not a checkpoint file: " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.config_digest = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<int>(r.u32()));
    const int n = shape_numel(shape);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (double& v : values) v = r.f64();
    ckpt.tensors.push_back(
        {name, Tensor::from_vector(std::move(shape), std::move(values))});
  }
  if (r.pos != buf.size()) throw IoError("trailing bytes in checkpoint");
  return ckpt;
}

void load_into_model(MMNet& model, const Checkpoint& ckpt,
                     std::uint64_t expected_digest) {
  if (ckpt.config_digest != expected_digest) {
    throw ConfigError(
        "checkpoint was produced under a different config (digest mismatch)");
  }
  const auto& entries = model.params().entries();
  if (entries.size() != ckpt.tensors.size())
    throw ConfigError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ParamEntry& have = entries[i];
    const ParamEntry& want = ckpt.tensors[i];
    if (have.name != want.name ||
        !same_shape(have.tensor.shape(), want.tensor.shape())) {
      throw ConfigError("checkpoint entry '" + want.name +
                        "' does not match model parameter '" + have.name +
                        "'");
    }
    Tensor dst = have.tensor;
    auto out = dst.mutable_data();
    auto src = want.tensor.data();
    std::copy(src.begin(), src.end(), out.begin());
  }
}

}  // namespace mmnet
