#include "lion/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include "lion/errors.hpp"

namespace lion::ckpt {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    const auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  double f64(const char* what) {
    const auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

double code(Activation a) { return static_cast<double>(static_cast<int>(a)); }

Activation activation_code(double v, const std::string& name) {
  if (v == 0.0) return Activation::tanh;
  if (v == 1.0) return Activation::identity;
  if (v == 2.0) return Activation::relu;
  throw FormatError("entry '" + name + "' holds an unknown activation code");
}

std::size_t as_count(double v, const std::string& name) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) {
    throw FormatError("entry '" + name + "' must hold a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

void add_dense(Checkpoint& c, const std::string& prefix, const Dense& d) {
  c.add(prefix + ".W", d.W);
  c.add(prefix + ".b", d.b);
  c.add(prefix + ".act", Tensor::scalar(code(d.activation)));
}

Dense dense_from(const Checkpoint& c, const std::string& prefix) {
  Dense d;
  d.W = c.at(prefix + ".W");
  d.b = c.at(prefix + ".b");
  d.activation = activation_code(c.at(prefix + ".act")[0], prefix + ".act");
  if (d.W.rank() != 2 || d.b.rank() != 1 || d.b.size() != d.W.rows()) {
    throw FormatError("entries under '" + prefix + "' have inconsistent shapes");
  }
  return d;
}

void add_backbone(Checkpoint& c, const Backbone& bb) {
  c.add("backbone.layers", Tensor::scalar(static_cast<double>(bb.layers().size())));
  for (std::size_t k = 0; k < bb.layers().size(); ++k) add_dense(c, "backbone." + std::to_string(k), bb.layers()[k]);
}

}  // namespace

bool Checkpoint::contains(std::string_view name) const noexcept {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::at(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e.value;
  }
  throw FormatError("checkpoint has no entry '" + std::string(name) + "'");
}

void Checkpoint::add(std::string name, Tensor value) {
  if (contains(name)) throw StateError("duplicate checkpoint entry '" + name + "'");
  entries.push_back({std::move(name), std::move(value)});
}

std::string encode(const Checkpoint& c) {
  std::string out(kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& e : c.entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t dim : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(dim));
    for (double v : e.value.data()) put_f64(out, v);
  }
  return out;
}

Checkpoint decode(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  }
  const std::uint32_t count = r.u32("entry count");
  Checkpoint c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    std::string name(r.take(len, "name"));
    const std::uint32_t rank = r.u32("rank");
    if (rank > 2) throw FormatError("entry '" + name + "' has rank " + std::to_string(rank) + " > 2");
    Tensor::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(r.u32("dims"));
      n *= shape.back();
    }
    if (n > r.remaining() / 8) throw FormatError("checkpoint truncated in payload of '" + name + "'");
    std::vector<double> vals(n);
    for (double& v : vals) v = r.f64("payload");
    try {
      c.add(std::move(name), Tensor(std::move(shape), std::move(vals)));
    } catch (const NumericError& e) {
      throw FormatError(std::string("checkpoint payload invalid: ") + e.what());
    } catch (const StateError& e) {
      throw FormatError(e.what());
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last checkpoint entry");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ArtifactError("cannot open '" + tmp.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw ArtifactError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw ArtifactError("cannot move checkpoint into place at '" + path.string() + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void save(const Checkpoint& c, const std::filesystem::path& path) { write_file_atomic(path, encode(c)); }

Checkpoint load(const std::filesystem::path& path) { return decode(read_file(path)); }

ModelKind kind_of(const Checkpoint& c) {
  const double k = c.at("meta.kind")[0];
  if (k == 0.0) return ModelKind::classifier;
  if (k == 1.0) return ModelKind::lion;
  throw FormatError("unknown model kind in checkpoint");
}

Checkpoint from_classifier(const Backbone& backbone, const Dense& head) {
  Checkpoint c;
  c.add("meta.kind", Tensor::scalar(static_cast<double>(ModelKind::classifier)));
  add_backbone(c, backbone);
  add_dense(c, "head", head);
  return c;
}

Backbone backbone_from(const Checkpoint& c) {
  const std::size_t n = as_count(c.at("backbone.layers")[0], "backbone.layers");
  if (n == 0) throw FormatError("checkpoint backbone has no layers");
  std::vector<Dense> layers;
  for (std::size_t k = 0; k < n; ++k) {
    layers.push_back(dense_from(c, "backbone." + std::to_string(k)));
    if (k > 0 && layers[k].in_dim() != layers[k - 1].out_dim()) {
      throw FormatError("checkpoint backbone layers do not chain");
    }
  }
  return Backbone(std::move(layers), true);
}

Dense head_from(const Checkpoint& c) { return dense_from(c, "head"); }

Checkpoint from_prompt_model(const PromptModel& m) {
  const LionOptions& o = m.options();
  Checkpoint c;
  c.add("meta.kind", Tensor::scalar(static_cast<double>(ModelKind::lion)));
  add_backbone(c, m.backbone());
  c.add("lion.kappa", Tensor::scalar(o.kappa));
  c.add("lion.layers", Tensor::scalar(static_cast<double>(o.layers)));
  c.add("lion.activation", Tensor::scalar(code(o.activation)));
  c.add("lion.two_pass", Tensor::scalar(o.two_pass ? 1.0 : 0.0));
  c.add("lion.solver", Tensor::vector({o.solver.tol, static_cast<double>(o.solver.max_iters),
                                       static_cast<double>(o.solver.anderson_depth), o.solver.damping}));
  const auto put_cells = [&c](const std::string& prefix, const std::vector<deq::DeqCell>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const std::string p = prefix + "." + std::to_string(k);
      c.add(p + ".W", cells[k].W);
      c.add(p + ".U", cells[k].U);
      c.add(p + ".b", cells[k].b);
    }
  };
  put_cells("p1", m.p1());
  put_cells("p2", m.p2());
  add_dense(c, "proj", m.proj());
  add_dense(c, "head", m.head());
  c.add("gate1", Tensor::vector({m.gate1().g_alpha, m.gate1().g_beta}));
  c.add("gate2", Tensor::vector({m.gate2().g_alpha, m.gate2().g_beta}));
  return c;
}

PromptModel prompt_model_from(const Checkpoint& c) {
  if (kind_of(c) != ModelKind::lion) throw FormatError("checkpoint does not hold a prompt model");
  LionOptions o;
  o.kappa = c.at("lion.kappa")[0];
  o.layers = static_cast<int>(as_count(c.at("lion.layers")[0], "lion.layers"));
  o.activation = activation_code(c.at("lion.activation")[0], "lion.activation");
  o.two_pass = c.at("lion.two_pass")[0] != 0.0;
  const Tensor& s = c.at("lion.solver");
  if (s.size() != 4) throw FormatError("entry 'lion.solver' must hold 4 values");
  o.solver.tol = s[0];
  o.solver.max_iters = static_cast<int>(as_count(s[1], "lion.solver"));
  o.solver.anderson_depth = static_cast<int>(as_count(s[2], "lion.solver"));
  o.solver.damping = s[3];

  const auto get_cells = [&](const std::string& prefix) {
    std::vector<deq::DeqCell> cells;
    for (int k = 0; k < o.layers; ++k) {
      const std::string p = prefix + "." + std::to_string(k);
      deq::DeqCell cell;
      cell.W = c.at(p + ".W");
      cell.U = c.at(p + ".U");
      cell.b = c.at(p + ".b");
      cell.kappa = o.kappa;
      cell.activation = o.activation;
      cells.push_back(std::move(cell));
    }
    return cells;
  };
  const auto gate = [&c](const std::string& name) {
    const Tensor& g = c.at(name);
    if (g.size() != 2) throw FormatError("entry '" + name + "' must hold 2 values");
    return GatePair{g[0], g[1]};
  };
  try {
    return PromptModel(backbone_from(c), get_cells("p1"), get_cells("p2"), dense_from(c, "proj"), dense_from(c, "head"),
                       gate("gate1"), gate("gate2"), o);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("checkpoint prompt model is inconsistent: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint prompt model is inconsistent: ") + e.what());
  }
}

}  // namespace lion::ckpt
