#include "biasbench/checkpoint.hpp"

#include <cstring>
#include <stdexcept>

#include "biasbench/io.hpp"

namespace bb {

namespace {

constexpr char kMagic[4] = {'B', 'B', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

struct Reader {
  const std::string& bytes;
  const std::string& origin;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint: " + origin + ": " + what);
  }
  void need(std::size_t n) const {
    if (pos + n > bytes.size()) fail("truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes[pos++]);
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string checkpoint_bytes(const PolicyModel& model) {
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(model.cfg.vocab_size));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.n_layers));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.d_model));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.n_heads));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.d_ff));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.max_seq_len));
  out.push_back(model.cfg.value_head ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [name, tensor] : model.params) {
    if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(tensor.shape.size()));
    for (std::size_t dim : tensor.shape) put_u32(out, static_cast<std::uint32_t>(dim));
    for (float v : tensor.data) put_f32(out, v);
  }
  put_u64(out, fnv1a64(out.data(), out.size()));
  return out;
}

void save_checkpoint(const std::string& path, const PolicyModel& model) {
  atomic_write_file(path, checkpoint_bytes(model));
}

PolicyModel checkpoint_from_bytes(const std::string& bytes, const std::string& origin) {
  Reader r{bytes, origin};
  if (bytes.size() < 4 + 2 + 8) r.fail("too small to be a checkpoint");
  if (bytes.compare(0, 4, kMagic, 4) != 0) r.fail("bad magic (not a checkpoint)");
  const std::uint64_t stored = [&] {
    Reader tail{bytes, origin, bytes.size() - 8};
    return tail.u64();
  }();
  if (fnv1a64(bytes.data(), bytes.size() - 8) != stored) r.fail("digest mismatch (corrupt file)");
  r.pos = 4;
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    r.fail("unsupported version " + std::to_string(version) + " (expected " +
           std::to_string(kVersion) + ")");
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(r.u32());
  cfg.n_layers = static_cast<int>(r.u32());
  cfg.d_model = static_cast<int>(r.u32());
  cfg.n_heads = static_cast<int>(r.u32());
  cfg.d_ff = static_cast<int>(r.u32());
  cfg.max_seq_len = static_cast<int>(r.u32());
  cfg.value_head = r.u8() != 0;
  cfg.validate();

  PolicyModel model = init_model(cfg, 0);
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != model.params.size())
    r.fail("tensor count " + std::to_string(n_tensors) + " does not match config (expected " +
           std::to_string(model.params.size()) + ")");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    const std::uint8_t ndim = r.u8();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u32();
    Tensor& dst = model.param(name);  // throws on unknown names
    if (dst.shape != shape)
      r.fail("tensor " + name + " has shape " + Tensor::shape_str(shape) + ", expected " +
             dst.shape_str());
    for (float& v : dst.data) v = r.f32();
  }
  if (r.pos != bytes.size() - 8) r.fail("trailing bytes after tensor table");
  return model;
}

PolicyModel load_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(read_text_file(path), path);
}

}  // namespace bb
