#include "preformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace preformer {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'F', 'M', 'R', 'C', 'K', 'P', 'T'};

enum class FieldType : std::uint8_t { kInt = 0, kFloat = 1, kBool = 2, kString = 3 };

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_name(const std::string& s) {
    put(static_cast<std::uint16_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string get_string(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::string get_name() { return get_string(get<std::uint16_t>()); }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw CheckpointError("truncated checkpoint");
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

struct Field {
  explicit Field(FieldType t, std::int64_t iv = 0) : type(t), i(iv) {}

  FieldType type;
  std::int64_t i = 0;
  double f = 0.0;
  std::string s;
};

std::vector<std::pair<std::string, Field>> config_fields(const ModelConfig& c) {
  auto int_field = [](Index v) { return Field{FieldType::kInt, static_cast<std::int64_t>(v)}; };
  auto bool_field = [](bool v) { return Field{FieldType::kBool, v ? 1 : 0}; };
  Field dropout{FieldType::kFloat};
  dropout.f = c.dropout;
  return {
      {"model.d_model", int_field(c.d_model)},
      {"model.d_ff", int_field(c.d_ff)},
      {"model.n_heads", int_field(c.n_heads)},
      {"model.l0", int_field(c.l0)},
      {"model.e_layers", int_field(c.e_layers)},
      {"model.d_layers", int_field(c.d_layers)},
      {"model.input_len", int_field(c.input_len)},
      {"model.pred_len", int_field(c.pred_len)},
      {"model.d_x", int_field(c.d_x)},
      {"model.d_y", int_field(c.d_y)},
      {"model.d_cov", int_field(c.d_cov)},
      {"model.decomp_kernel", int_field(c.decomp_kernel)},
      {"model.dropout", dropout},
      {"model.predictive", bool_field(c.predictive)},
      {"model.multiscale", bool_field(c.multiscale)},
      {"model.alpha_decreasing", bool_field(c.alpha_order == AlphaOrder::kDecreasing)},
  };
}

void apply_field(ModelConfig& c, const std::string& name, const Field& f) {
  auto as_index = [&]() { return static_cast<Index>(f.i); };
  if (name == "model.d_model") c.d_model = as_index();
  else if (name == "model.d_ff") c.d_ff = as_index();
  else if (name == "model.n_heads") c.n_heads = as_index();
  else if (name == "model.l0") c.l0 = as_index();
  else if (name == "model.e_layers") c.e_layers = as_index();
  else if (name == "model.d_layers") c.d_layers = as_index();
  else if (name == "model.input_len") c.input_len = as_index();
  else if (name == "model.pred_len") c.pred_len = as_index();
  else if (name == "model.d_x") c.d_x = as_index();
  else if (name == "model.d_y") c.d_y = as_index();
  else if (name == "model.d_cov") c.d_cov = as_index();
  else if (name == "model.decomp_kernel") c.decomp_kernel = as_index();
  else if (name == "model.dropout") c.dropout = f.f;
  else if (name == "model.predictive") c.predictive = f.i != 0;
  else if (name == "model.multiscale") c.multiscale = f.i != 0;
  else if (name == "model.alpha_decreasing")
    c.alpha_order = f.i != 0 ? AlphaOrder::kDecreasing : AlphaOrder::kIncreasing;
  else throw CheckpointError("unknown model field " + name);
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);

  auto fields = config_fields(ckpt.config);
  for (const auto& [k, v] : ckpt.metadata) {
    Field f{FieldType::kString};
    f.s = v;
    fields.emplace_back(k, f);
  }
  w.put(static_cast<std::uint32_t>(fields.size()));
  for (const auto& [name, f] : fields) {
    w.put_name(name);
    w.put(static_cast<std::uint8_t>(f.type));
    switch (f.type) {
      case FieldType::kInt:
        w.put(f.i);
        break;
      case FieldType::kFloat:
        w.put(f.f);
        break;
      case FieldType::kBool:
        w.put(static_cast<std::uint8_t>(f.i != 0));
        break;
      case FieldType::kString:
        w.put(static_cast<std::uint32_t>(f.s.size()));
        w.put_bytes(f.s.data(), f.s.size());
        break;
    }
  }

  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    w.put_name(name);
    w.put(std::uint32_t{2});
    w.put(static_cast<std::uint64_t>(m.rows()));
    w.put(static_cast<std::uint64_t>(m.cols()));
    w.put_bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  auto& bytes = w.bytes();
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
  w.put(crc);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 4) throw CheckpointError("file too short");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 4);
  const auto actual = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
  if (stored != actual) throw CheckpointError("checksum mismatch");

  Reader r(bytes.data(), body);
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported version " + std::to_string(version));
  }

  Checkpoint ckpt;
  const auto n_fields = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_fields; ++i) {
    const std::string name = r.get_name();
    Field f{static_cast<FieldType>(r.get<std::uint8_t>())};
    switch (f.type) {
      case FieldType::kInt:
        f.i = r.get<std::int64_t>();
        break;
      case FieldType::kFloat:
        f.f = r.get<double>();
        break;
      case FieldType::kBool:
        f.i = r.get<std::uint8_t>();
        break;
      case FieldType::kString:
        f.s = r.get_string(r.get<std::uint32_t>());
        break;
      default:
        throw CheckpointError("unknown field type in " + name);
    }
    if (name.rfind("model.", 0) == 0) {
      apply_field(ckpt.config, name, f);
    } else {
      ckpt.metadata[name] = f.s;
    }
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.get_name();
    const auto ndim = r.get<std::uint32_t>();
    if (ndim != 2) throw CheckpointError("tensor " + name + " is not rank 2");
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    const std::size_t n = sizeof(double) * static_cast<std::size_t>(rows * cols);
    std::memcpy(m.data(), r.take(n), n);
    ckpt.tensors.emplace_back(name, std::move(m));
  }
  if (!r.done()) throw CheckpointError("trailing bytes before checksum");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const Preformer& model, std::map<std::string, std::string> metadata,
                           std::vector<std::pair<std::string, Matrix>> extra) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.metadata = std::move(metadata);
  for (const auto& [name, t] : model.params().named()) ckpt.tensors.emplace_back(name, t.value());
  for (auto& e : extra) ckpt.tensors.push_back(std::move(e));
  return ckpt;
}

Preformer model_from_checkpoint(const Checkpoint& ckpt) {
  Preformer model(ckpt.config, 0);
  for (auto& [name, t] : model.params().named()) {
    const Matrix* stored = ckpt.find(name);
    if (!stored) throw CheckpointError("missing parameter " + name);
    if (stored->rows() != t.rows() || stored->cols() != t.cols()) {
      throw CheckpointError("parameter " + name + " has the wrong shape");
    }
    Tensor handle = t;
    handle.mutable_value() = *stored;
  }
  return model;
}

}  // namespace preformer
