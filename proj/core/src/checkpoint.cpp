#include "ocunet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace ocunet {
namespace {

constexpr char kMagic[4] = {'O', 'C', 'U', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
  buf.push_back(static_cast<std::uint8_t>(v));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& buf, float v) {
  put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, const std::string& path)
      : data_(data), size_(size), path_(path) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string bytes(std::size_t n) {
    require(n);
    std::string out(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::uint8_t byte() {
    require(1);
    return data_[pos_++];
  }

  void require(std::size_t n) {
    if (pos_ + n > size_) throw std::runtime_error("checkpoint: truncated file " + path_);
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string path_;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  return static_cast<std::uint32_t>(
      ::crc32(0ul, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

}  // namespace

ModelConfig Checkpoint::model_config() const { return ModelConfig::from_kv(meta); }

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);

  const std::string meta = checkpoint.meta.dump();
  put_u32(buf, static_cast<std::uint32_t>(meta.size()));
  buf.insert(buf.end(), meta.begin(), meta.end());

  put_u32(buf, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& entry : checkpoint.tensors) {
    put_u16(buf, static_cast<std::uint16_t>(entry.name.size()));
    buf.insert(buf.end(), entry.name.begin(), entry.name.end());
    buf.push_back(static_cast<std::uint8_t>(entry.kind));
    buf.push_back(static_cast<std::uint8_t>(entry.shape.size()));
    for (int d : entry.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    put_u64(buf, offset);
    if (entry.values.size() != shape_numel(entry.shape)) {
      throw std::invalid_argument("checkpoint: entry '" + entry.name +
                                  "' has values inconsistent with its shape");
    }
    offset += entry.values.size();
  }
  put_u64(buf, offset);
  for (const auto& entry : checkpoint.tensors) {
    for (float v : entry.values) put_f32(buf, v);
  }
  put_u32(buf, crc_of(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw std::runtime_error("checkpoint: truncated file " + path);

  const std::uint32_t stored_crc = static_cast<std::uint32_t>(buf[buf.size() - 4]) |
                                   (static_cast<std::uint32_t>(buf[buf.size() - 3]) << 8) |
                                   (static_cast<std::uint32_t>(buf[buf.size() - 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24);
  if (crc_of(buf.data(), buf.size() - 4) != stored_crc) {
    throw std::runtime_error("checkpoint: checksum mismatch in " + path);
  }

  Reader r(buf.data(), buf.size() - 4, path);
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version) + " in " + path);
  }

  Checkpoint ckpt;
  const std::uint32_t meta_len = r.u32();
  ckpt.meta = KvDoc::parse(r.bytes(meta_len));

  const std::uint32_t count = r.u32();
  std::vector<std::uint64_t> offsets(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Entry entry;
    entry.name = r.bytes(r.u16());
    entry.kind = static_cast<Checkpoint::Kind>(r.bytes(1)[0]);
    const int ndim = static_cast<int>(r.bytes(1)[0]);
    for (int d = 0; d < ndim; ++d) entry.shape.push_back(static_cast<int>(r.u32()));
    offsets[i] = r.u64();
    ckpt.tensors.push_back(std::move(entry));
  }
  const std::uint64_t payload = r.u64();
  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (offsets[i] != expected_offset) {
      throw std::runtime_error("checkpoint: inconsistent tensor index in " + path);
    }
    expected_offset += shape_numel(ckpt.tensors[i].shape);
  }
  if (payload != expected_offset) {
    throw std::runtime_error("checkpoint: payload size disagrees with index in " + path);
  }
  for (auto& entry : ckpt.tensors) {
    entry.values.resize(shape_numel(entry.shape));
    for (auto& v : entry.values) v = r.f32();
  }
  return ckpt;
}

Checkpoint snapshot_model(const OCUNet<float>& model, const Adam<float>* optimizer) {
  Checkpoint ckpt;
  ckpt.meta = model.config().to_kv();
  for (const auto& entry : model.parameters()) {
    Checkpoint::Entry out;
    out.name = entry.name;
    out.kind = entry.trainable ? Checkpoint::Kind::parameter : Checkpoint::Kind::buffer;
    out.shape = entry.tensor.shape();
    out.values.assign(entry.tensor.data(), entry.tensor.data() + entry.tensor.size());
    ckpt.tensors.push_back(std::move(out));
  }
  if (optimizer) {
    ckpt.meta.set("train.adam_steps", std::to_string(optimizer->steps()));
    auto& opt = const_cast<Adam<float>&>(*optimizer);
    for (std::size_t i = 0; i < opt.slot_count(); ++i) {
      for (auto kind : {Checkpoint::Kind::adam_m, Checkpoint::Kind::adam_v}) {
        Checkpoint::Entry out;
        out.name = opt.slot_name(i);
        out.kind = kind;
        const auto& vec = kind == Checkpoint::Kind::adam_m ? opt.slot_m(i) : opt.slot_v(i);
        out.shape = {static_cast<int>(vec.size())};
        out.values.assign(vec.begin(), vec.end());
        ckpt.tensors.push_back(std::move(out));
      }
    }
  }
  return ckpt;
}

void restore_model(OCUNet<float>& model, const Checkpoint& checkpoint, Adam<float>* optimizer) {
  std::unordered_map<std::string, const Checkpoint::Entry*> params, buffers, adam_m, adam_v;
  for (const auto& entry : checkpoint.tensors) {
    switch (entry.kind) {
      case Checkpoint::Kind::parameter: params[entry.name] = &entry; break;
      case Checkpoint::Kind::buffer: buffers[entry.name] = &entry; break;
      case Checkpoint::Kind::adam_m: adam_m[entry.name] = &entry; break;
      case Checkpoint::Kind::adam_v: adam_v[entry.name] = &entry; break;
    }
  }
  for (auto& entry : model.parameters()) {
    const auto& table = entry.trainable ? params : buffers;
    auto it = table.find(entry.name);
    if (it == table.end()) {
      throw std::runtime_error("checkpoint: tensor '" + entry.name +
                               "' missing; the checkpoint was written for a different "
                               "architecture");
    }
    if (it->second->shape != entry.tensor.shape()) {
      throw std::runtime_error("checkpoint: tensor '" + entry.name + "' has shape " +
                               shape_str(it->second->shape) + " but the model expects " +
                               shape_str(entry.tensor.shape()));
    }
    std::copy(it->second->values.begin(), it->second->values.end(), entry.tensor.mutable_data());
  }
  if (optimizer) {
    for (std::size_t i = 0; i < optimizer->slot_count(); ++i) {
      const std::string& name = optimizer->slot_name(i);
      auto m = adam_m.find(name);
      auto v = adam_v.find(name);
      if (m == adam_m.end() || v == adam_v.end()) {
        throw std::runtime_error("checkpoint: optimizer state for '" + name + "' missing");
      }
      optimizer->slot_m(i).assign(m->second->values.begin(), m->second->values.end());
      optimizer->slot_v(i).assign(v->second->values.begin(), v->second->values.end());
    }
    if (auto steps = checkpoint.meta.find("train.adam_steps")) {
      optimizer->set_steps(std::stoll(*steps));
    }
  }
}

OCUNet<float> model_from_checkpoint(const Checkpoint& checkpoint) {
  ModelConfig config = checkpoint.model_config();
  OCUNet<float> model(config, 0);
  restore_model(model, checkpoint);
  return model;
}

}  // namespace ocunet
