#include "bam/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace bam {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw CheckpointError("cannot write checkpoint " + path.string());
  }
  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, const Shape& shape, std::span<const double> values) {
    bytes(name);
    pod(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) pod(static_cast<std::uint64_t>(d));
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw CheckpointError("failed writing checkpoint " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw CheckpointError("cannot open checkpoint " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }
  std::string bytes() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CheckpointError("checkpoint " + path_.string() + " is truncated");
    }
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const BamModel& model,
                     const TrainingState& state) {
  Writer w(path);
  const char magic[4] = {'B', 'A', 'M', 'C'};
  for (char c : magic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.bytes(config_to_json(model.config(), -1));
  w.pod(static_cast<std::uint64_t>(state.epoch));
  w.bytes(state.rng_state);
  w.pod(static_cast<std::uint64_t>(state.optimizer_step));

  const NamedTensors params = model.parameters();
  const NamedTensors buffers = model.buffers();
  const bool with_moments = !state.first_moments.empty();
  if (with_moments && (state.first_moments.size() != params.size() ||
                       state.second_moments.size() != params.size())) {
    throw CheckpointError("optimizer state does not match the parameter count");
  }
  std::uint32_t count = static_cast<std::uint32_t>(params.size() + buffers.size());
  if (with_moments) count += static_cast<std::uint32_t>(2 * params.size());
  w.pod(count);
  for (const auto& p : params) w.tensor(p.name, p.tensor.shape(), p.tensor.data());
  for (const auto& b : buffers) w.tensor(b.name, b.tensor.shape(), b.tensor.data());
  if (with_moments) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      w.tensor("adam.m:" + params[k].name, params[k].tensor.shape(), state.first_moments[k]);
      w.tensor("adam.v:" + params[k].name, params[k].tensor.shape(), state.second_moments[k]);
    }
  }
  w.finish(path);
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "BAMC", 4) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  LoadedCheckpoint ck;
  ck.config = config_from_json(r.bytes());
  ck.state.epoch = r.pod<std::uint64_t>();
  ck.state.rng_state = r.bytes();
  ck.state.optimizer_step = r.pod<std::uint64_t>();
  const auto count = r.pod<std::uint32_t>();
  std::map<std::string, std::vector<double>> m, v;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.bytes();
    const auto ndim = r.pod<std::uint32_t>();
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.pod<std::uint64_t>());
    std::vector<double> values(shape_numel(shape));
    r.read(values.data(), values.size() * sizeof(double));
    if (name.rfind("adam.m:", 0) == 0) {
      m[name.substr(7)] = std::move(values);
    } else if (name.rfind("adam.v:", 0) == 0) {
      v[name.substr(7)] = std::move(values);
    } else {
      ck.tensors.push_back({name, Tensor::from_vector(shape, std::move(values))});
    }
  }
  if (!m.empty()) {
    BamModel shape_model(ck.config);
    for (const auto& p : shape_model.parameters()) {
      if (!m.count(p.name) || !v.count(p.name)) {
        throw CheckpointError("checkpoint lacks optimizer moments for " + p.name);
      }
      ck.state.first_moments.push_back(std::move(m[p.name]));
      ck.state.second_moments.push_back(std::move(v[p.name]));
    }
  }
  return ck;
}

void load_weights(BamModel& model, const LoadedCheckpoint& ckpt,
                  const std::function<bool(const std::string&)>& skip) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t.tensor;
  NamedTensors targets = model.parameters();
  for (auto& b : model.buffers()) targets.push_back(b);
  for (auto& t : targets) {
    if (skip && skip(t.name)) continue;
    const auto it = by_name.find(t.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint has no tensor named " + t.name);
    if (it->second->shape() != t.tensor.shape()) {
      throw CheckpointError("shape mismatch for " + t.name + ": checkpoint " +
                            shape_str(it->second->shape()) + " vs model " +
                            shape_str(t.tensor.shape()));
    }
    auto dst = t.tensor.mutable_data();
    const auto src = it->second->data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

BamModel load_model(const std::filesystem::path& path) {
  const LoadedCheckpoint ck = read_checkpoint(path);
  BamModel model(ck.config);
  load_weights(model, ck);
  return model;
}

}  // namespace bam
