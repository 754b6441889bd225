#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "amcnn/model.hpp"

namespace amcnn {
namespace {

constexpr char kMagic[] = "AMCNN";
constexpr char kVersion = '1';
// Guards against absurd allocations from corrupted length fields.
constexpr std::uint64_t kMaxNameLength = 4096;
constexpr std::uint64_t kMaxRank = 8;

using Kind = CheckpointError::Kind;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  void le(std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf, n);
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) truncated();
    return s;
  }
  void f64_block(std::span<double> out) {
    const std::string raw = bytes(out.size() * 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i * 8 + b])) << (8 * b);
      }
      out[i] = std::bit_cast<double>(bits);
    }
  }

 private:
  [[noreturn]] static void truncated() {
    throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
  }
  std::uint64_t le(int n) {
    unsigned char buf[8];
    in_.read(reinterpret_cast<char*>(buf), n);
    if (in_.gcount() != n) truncated();
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const ModelParams& model, std::ostream& out) {
  Writer w(out);
  w.bytes(kMagic);
  w.u8(static_cast<std::uint8_t>(kVersion));
  const ModelConfig& cfg = model.config;
  w.u8(static_cast<std::uint8_t>(cfg.variant));
  w.u8(cfg.rescale_attention ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(cfg.in_channels));
  w.u32(static_cast<std::uint32_t>(cfg.attention_kernel));
  w.f64(cfg.init_std);
  w.u64(cfg.seed);
  w.u32(static_cast<std::uint32_t>(cfg.branches.size()));
  for (const BranchSpec& spec : cfg.branches) {
    w.u8(static_cast<std::uint8_t>(to_char(spec.label)));
    for (std::size_t k : spec.kernel_sizes) w.u32(static_cast<std::uint32_t>(k));
    for (std::size_t c : spec.channels) w.u32(static_cast<std::uint32_t>(c));
  }
  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const Parameter& p : model.params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t extent : p.tensor.shape()) w.u64(extent);
    for (double v : p.tensor.data()) w.f64(v);
  }
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(Kind::Io, "cannot open " + path.string() + " for writing");
  save_checkpoint(model, out);
  if (!out) throw CheckpointError(Kind::Io, "failed writing " + path.string());
}

ModelParams load_checkpoint(std::istream& in) {
  Reader r(in);
  char head[6] = {};
  in.read(head, 6);
  if (in.gcount() != 6 || std::memcmp(head, kMagic, 5) != 0) {
    throw CheckpointError(Kind::Version, "not an AM-CNN checkpoint (bad magic)");
  }
  if (head[5] != kVersion) {
    throw CheckpointError(Kind::Version,
                          std::string("unsupported checkpoint version '") + head[5] + "'");
  }

  ModelConfig cfg;
  const std::uint8_t variant = r.u8();
  if (variant > static_cast<std::uint8_t>(Variant::BranchOnly)) {
    throw CheckpointError(Kind::Inconsistent, "unknown model variant " + std::to_string(variant));
  }
  cfg.variant = static_cast<Variant>(variant);
  cfg.rescale_attention = r.u8() != 0;
  cfg.in_channels = r.u32();
  cfg.attention_kernel = r.u32();
  cfg.init_std = r.f64();
  cfg.seed = r.u64();
  const std::uint32_t branch_count = r.u32();
  if (branch_count > 3) {
    throw CheckpointError(Kind::Inconsistent, "checkpoint declares " + std::to_string(branch_count) +
                                                  " branches");
  }
  cfg.branches.clear();
  for (std::uint32_t i = 0; i < branch_count; ++i) {
    BranchSpec spec;
    const auto label = parse_branch_label(static_cast<char>(r.u8()));
    if (!label) throw CheckpointError(Kind::Inconsistent, "unknown branch label");
    spec.label = *label;
    for (std::size_t& k : spec.kernel_sizes) k = r.u32();
    for (std::size_t& c : spec.channels) c = r.u32();
    cfg.branches.push_back(spec);
  }

  // Build the expected layout with zero weights, then fill it.
  ModelConfig skeleton_cfg = cfg;
  skeleton_cfg.init_std = 0.0;
  ModelParams model;
  try {
    model = build_model(skeleton_cfg);
  } catch (const Error& e) {
    throw CheckpointError(Kind::Inconsistent, std::string("invalid model metadata: ") + e.what());
  }
  model.config = cfg;

  const std::uint32_t tensor_count = r.u32();
  if (tensor_count != model.params.size()) {
    throw CheckpointError(Kind::Inconsistent,
                          "checkpoint holds " + std::to_string(tensor_count) + " tensors, model has " +
                              std::to_string(model.params.size()));
  }
  std::vector<bool> seen(model.params.size(), false);
  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    const std::uint32_t name_len = r.u32();
    if (name_len > kMaxNameLength) throw CheckpointError(Kind::Inconsistent, "tensor name too long");
    const std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) throw CheckpointError(Kind::Inconsistent, "tensor '" + name + "' rank too large");
    Shape shape(rank);
    for (std::size_t& extent : shape) extent = r.u64();

    std::size_t index = model.params.size();
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      if (model.params[i].name == name) index = i;
    }
    if (index == model.params.size()) {
      throw CheckpointError(Kind::Inconsistent, "unexpected tensor '" + name + "'");
    }
    if (seen[index]) throw CheckpointError(Kind::Inconsistent, "duplicate tensor '" + name + "'");
    seen[index] = true;
    Tensor& target = model.params[index].tensor;
    if (target.shape() != shape) {
      throw CheckpointError(Kind::Inconsistent, "tensor '" + name + "' has shape " +
                                                    shape_string(shape) + ", expected " +
                                                    shape_string(target.shape()));
    }
    r.f64_block(target.data());
  }
  return model;
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::Io, "cannot open " + path.string());
  try {
    return load_checkpoint(in);
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace amcnn
