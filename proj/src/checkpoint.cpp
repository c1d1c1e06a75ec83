#include "a2clpt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>

namespace a2clpt {
namespace {

constexpr const char* kMagic = "A2CLPT-CKPT v1\n";

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::string& bytes() const { return bytes_; }

  template <typename Derived>
  void section(const std::string& name, const Eigen::DenseBase<Derived>& m) {
    u32(static_cast<std::uint32_t>(name.size()));
    raw(name);
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int b = 0; b < n; ++b) bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int b = 0; b < n; ++b) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw LoadError("checkpoint: truncated file");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const ModelConfig& m = ckpt.model;
  Writer w;
  w.raw(kMagic);
  std::uint32_t count = 1 + static_cast<std::uint32_t>(ckpt.bank.sets.size());
  for_each_tensor(ckpt.params, [&](const std::string&, const auto&, bool) { ++count; });
  w.u32(count);
  Eigen::RowVectorXd meta(7);
  meta << m.feature_dim, m.embed_dim, m.num_classes, m.kernel_size, m.erase_ratio, m.omega,
      m.adversarial ? 1.0 : 0.0;
  w.section("model.config", meta);
  for_each_tensor(ckpt.params, [&](const std::string& name, const auto& t, bool) { w.section(name, t); });
  for (Branch b : kAllBranches) w.section(std::string("centers.") + branch_name(b), ckpt.bank.set(b));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint: " + path.string());
  Reader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (r.raw(std::string(kMagic).size()) != kMagic) throw LoadError("checkpoint: bad header in " + path.string());

  std::map<std::string, Tensor2> sections;
  const auto count = r.uint(4);
  for (std::uint64_t s = 0; s < count; ++s) {
    const auto name_len = r.uint(4);
    std::string name = r.raw(name_len);
    const auto rows = static_cast<Index>(r.uint(8));
    const auto cols = static_cast<Index>(r.uint(8));
    if (rows < 0 || cols < 0 || rows * cols > (Index{1} << 32)) throw LoadError("checkpoint: bad shape for " + name);
    Tensor2 m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = r.f64();
    sections[name] = std::move(m);
  }
  if (!r.done()) throw LoadError("checkpoint: trailing bytes");

  auto take = [&](const std::string& name) -> Tensor2& {
    auto it = sections.find(name);
    if (it == sections.end()) throw LoadError("checkpoint: missing section " + name);
    return it->second;
  };
  const Tensor2& meta = take("model.config");
  if (meta.size() != 7) throw LoadError("checkpoint: bad model.config section");
  Checkpoint ckpt;
  ckpt.model.feature_dim = static_cast<int>(meta(0));
  ckpt.model.embed_dim = static_cast<int>(meta(1));
  ckpt.model.num_classes = static_cast<int>(meta(2));
  ckpt.model.kernel_size = static_cast<int>(meta(3));
  ckpt.model.erase_ratio = meta(4);
  ckpt.model.omega = meta(5);
  ckpt.model.adversarial = meta(6) != 0.0;
  try {
    validate_model_config(ckpt.model);
  } catch (const InvalidInput& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }

  std::mt19937_64 unused(0);
  ckpt.params = zeros_like(init_params(ckpt.model, unused));
  for_each_tensor(ckpt.params, [&](const std::string& name, auto& t, bool) {
    const Tensor2& m = take(name);
    if (m.rows() != t.rows() || m.cols() != t.cols()) {
      throw LoadError("checkpoint: shape mismatch for " + name);
    }
    t = m;
  });
  for (Branch b : kAllBranches) {
    Tensor2& c = take(std::string("centers.") + branch_name(b));
    if (c.rows() != ckpt.model.num_classes || c.cols() != ckpt.model.embed_dim) {
      throw LoadError(std::string("checkpoint: bad center shape for ") + branch_name(b));
    }
    ckpt.bank.set(b) = c;
  }
  return ckpt;
}

}  // namespace a2clpt
