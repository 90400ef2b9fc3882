#include "kattn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "kattn/errors.hpp"

namespace kattn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  template <typename T>
  T get() {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof value);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > (std::uint64_t{1} << 32)) fail("implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(char* dst, std::size_t n) {
    if (!in_.read(dst, static_cast<std::streamsize>(n))) fail("truncated file");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint " + file_ + ": " + what);
  }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RelationModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);

  nlohmann::ordered_json meta;
  meta["config"] = nlohmann::ordered_json::parse(model.config().to_json());
  meta["vocab"] = nlohmann::ordered_json::parse(model.vocab().to_json());
  meta["lexicon"] = lexicon_to_jsonl(model.lexicon());
  put_string(out, meta.dump());

  ParamList tensors = model.parameters();
  for (const NamedParam& b : model.buffers()) tensors.push_back(b);
  put<std::uint64_t>(out, tensors.size());
  for (const NamedParam& p : tensors) {
    put_string(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t e : p.tensor.shape()) put<std::uint64_t>(out, e);
    const auto data = p.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

std::unique_ptr<RelationModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[sizeof kCheckpointMagic];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) r.fail("bad magic bytes");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("unsupported format version " + std::to_string(version));
  }

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad metadata: ") + e.what());
  }
  ModelConfig config = ModelConfig::from_json(meta.at("config").dump());
  Vocab vocab = Vocab::from_json(meta.at("vocab").dump());
  auto lexicon = parse_lexicon(meta.at("lexicon").get<std::string>(), path.string() + ":lexicon");
  auto model = std::make_unique<RelationModel>(config, std::move(vocab), std::move(lexicon));

  std::map<std::string, Tensor> slots;
  for (const NamedParam& p : model->parameters()) slots.emplace(p.name, p.tensor);
  for (const NamedParam& p : model->buffers()) slots.emplace(p.name, p.tensor);

  const auto count = r.get<std::uint64_t>();
  if (count != slots.size()) {
    r.fail("holds " + std::to_string(count) + " tensors, model expects " +
           std::to_string(slots.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) r.fail("implausible rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint64_t>();
    auto it = slots.find(name);
    if (it == slots.end()) r.fail("unexpected tensor " + name);
    if (it->second.shape() != shape) {
      r.fail("tensor " + name + " has shape " + shape_str(shape) + ", model expects " +
             shape_str(it->second.shape()));
    }
    auto dst = it->second.mutable_data();
    r.read(reinterpret_cast<char*>(dst.data()), dst.size() * sizeof(double));
    slots.erase(it);
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after the last tensor");
  return model;
}

}  // namespace kattn
