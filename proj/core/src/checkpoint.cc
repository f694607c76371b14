#include "fedbook/checkpoint.h"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fedbook/errors.h"

namespace fedbook {
namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'B', 'O', 'O', 'K', '\0'};
// Guards against absurd allocations when reading a corrupt file.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename T>
void Put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void PutString(std::ostream& out, const std::string& s) {
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T Get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("checkpoint truncated");
  return v;
}

std::string GetString(std::istream& in) {
  const auto n = Get<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ValidationError("checkpoint truncated");
  return s;
}

}  // namespace

void WriteCheckpoint(const Checkpoint& ckpt, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  Put<std::uint32_t>(out, kCheckpointVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    PutString(out, k);
    PutString(out, v);
  }
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    PutString(out, name);
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) Put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  Put<std::uint8_t>(out, ckpt.counters ? 1 : 0);
  if (ckpt.counters) {
    Put<std::uint64_t>(out, ckpt.counters->heads());
    Put<std::uint64_t>(out, ckpt.counters->tokens());
    for (std::uint64_t c : ckpt.counters->raw()) Put<std::uint64_t>(out, c);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

Checkpoint ReadCheckpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a fedbook checkpoint");
  }
  const auto version = Get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto meta = Get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = GetString(in);
    ckpt.metadata[k] = GetString(in);
  }
  const auto count = Get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = GetString(in);
    const auto rank = Get<std::uint32_t>(in);
    Shape shape;
    std::uint64_t elems = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(Get<std::uint64_t>(in));
      elems *= shape.back();
      if (elems > kMaxElements) throw ValidationError("checkpoint tensor too large");
    }
    std::vector<double> data(elems);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(elems * sizeof(double)));
    if (!in) throw ValidationError("checkpoint truncated in " + name);
    ckpt.params.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (Get<std::uint8_t>(in)) {
    const auto heads = Get<std::uint64_t>(in);
    const auto tokens = Get<std::uint64_t>(in);
    if (heads * tokens > kMaxElements) throw ValidationError("checkpoint counters too large");
    FrequencyCounters c(heads, tokens);
    for (std::uint64_t h = 0; h < heads; ++h)
      for (std::uint64_t j = 0; j < tokens; ++j) c.at(h, j) = Get<std::uint64_t>(in);
    ckpt.counters = std::move(c);
  }
  return ckpt;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  WriteCheckpoint(ckpt, out);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return ReadCheckpoint(in);
}

}  // namespace fedbook
