#include "npst3/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "npst3/errors.hpp"

namespace npst3 {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'N', 'P', 'S', 'T', '3', 'C', 'K', '\n'};

template <class T>
void put(std::string &out, T value)
{
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader
{
public:
  Reader(std::string const &bytes, std::string const &source)
    : bytes_(bytes)
    , source_(source)
  {}

  template <class T>
  T get()
  {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n)
  {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void read_doubles(std::vector<double> &out, std::size_t n)
  {
    if (n > (bytes_.size() - pos_) / sizeof(double))
    {
      fail("truncated array data");
    }
    out.resize(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  std::size_t pos() const
  {
    return pos_;
  }

  [[noreturn]] void fail(std::string const &what) const
  {
    throw LoadError(source_ + ": " + what);
  }

private:
  void need(std::size_t n)
  {
    if (pos_ + n > bytes_.size())
    {
      fail("truncated checkpoint");
    }
  }

  std::string const &bytes_;
  std::string const &source_;
  std::size_t        pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a(void const *data, std::size_t size, std::uint64_t seed)
{
  auto const   *p = static_cast<unsigned char const *>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i)
  {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Checkpoint::add_network(std::string const &name, nn::Sequential &net)
{
  nlohmann::json layers = nlohmann::json::array();
  for (auto const &spec : net.specs())
  {
    layers.push_back(nn::layer_spec_to_json(spec));
  }
  auto const tensors = nn::state_tensors(net);
  header["networks"][name] = {{"layers", layers}, {"first_array", arrays.size()}, {"array_count", tensors.size()}};
  for (auto const *t : tensors)
  {
    arrays.emplace_back(t->values().begin(), t->values().end());
  }
}

nn::Sequential Checkpoint::network(std::string const &name) const
{
  if (!header.contains("networks") || !header["networks"].contains(name))
  {
    throw LoadError("checkpoint has no network '" + name + "'");
  }
  auto const                &entry = header["networks"][name];
  std::vector<nn::LayerSpec> specs;
  for (auto const &l : entry.at("layers"))
  {
    specs.push_back(nn::layer_spec_from_json(l));
  }
  nn::Sequential net(specs);
  std::vector<nn::Tensor *> targets;
  for (auto *p : net.parameters())
  {
    targets.push_back(&p->value);
  }
  for (auto *b : net.buffers())
  {
    targets.push_back(b);
  }
  std::size_t const first = entry.at("first_array").get<std::size_t>();
  std::size_t const count = entry.at("array_count").get<std::size_t>();
  if (count != targets.size() || first + count > arrays.size())
  {
    throw LoadError("network '" + name + "' array table does not match its layers");
  }
  for (std::size_t i = 0; i < count; ++i)
  {
    auto const &src = arrays[first + i];
    if (src.size() != targets[i]->size())
    {
      throw LoadError("network '" + name + "' array #" + std::to_string(i) + " has " + std::to_string(src.size()) +
                      " values, expected " + std::to_string(targets[i]->size()));
    }
    std::copy(src.begin(), src.end(), targets[i]->values().begin());
  }
  return net;
}

void Checkpoint::embed(std::string const &key, Checkpoint const &inner)
{
  nlohmann::json h = inner.header;
  h["kind"]        = static_cast<std::uint32_t>(inner.kind);
  if (h.contains("networks"))
  {
    for (auto &[name, entry] : h["networks"].items())
    {
      entry["first_array"] = entry["first_array"].get<std::size_t>() + arrays.size();
    }
  }
  arrays.insert(arrays.end(), inner.arrays.begin(), inner.arrays.end());
  header[key] = std::move(h);
}

Checkpoint Checkpoint::extract(std::string const &key) const
{
  if (!header.contains(key) || !header[key].is_object())
  {
    throw LoadError("checkpoint has no embedded '" + key + "'");
  }
  Checkpoint inner;
  inner.header = header[key];
  try
  {
    inner.kind = static_cast<CheckpointKind>(inner.header.at("kind").get<std::uint32_t>());
    inner.header.erase("kind");
    if (inner.header.contains("networks"))
    {
      for (auto &[name, entry] : inner.header["networks"].items())
      {
        std::size_t const first = entry.at("first_array").get<std::size_t>();
        std::size_t const count = entry.at("array_count").get<std::size_t>();
        if (first + count > arrays.size())
        {
          throw LoadError("embedded '" + key + "' network '" + name + "' exceeds the array table");
        }
        entry["first_array"] = inner.arrays.size();
        inner.arrays.insert(inner.arrays.end(), arrays.begin() + static_cast<std::ptrdiff_t>(first),
                            arrays.begin() + static_cast<std::ptrdiff_t>(first + count));
      }
    }
  }
  catch (nlohmann::json::exception const &e)
  {
    throw LoadError("embedded '" + key + "': " + e.what());
  }
  return inner;
}

std::string serialize_checkpoint(Checkpoint const &ckpt)
{
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.kind));
  std::string const header = ckpt.header.dump();
  put<std::uint64_t>(out, header.size());
  out += header;
  put<std::uint64_t>(out, ckpt.arrays.size());
  for (auto const &a : ckpt.arrays)
  {
    put<std::uint64_t>(out, a.size());
    out.append(reinterpret_cast<char const *>(a.data()), a.size() * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(std::string const &bytes, std::string const &source)
{
  Reader in(bytes, source);
  if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
  {
    in.fail("not an NPST3 checkpoint (bad magic)");
  }
  auto const version = in.get<std::uint32_t>();
  if (version != kCheckpointFormatVersion)
  {
    in.fail("unsupported checkpoint format version " + std::to_string(version) + " (expected " +
            std::to_string(kCheckpointFormatVersion) + ")");
  }
  if (bytes.size() < sizeof(kMagic) + 8 + sizeof(std::uint64_t))
  {
    in.fail("truncated checkpoint");
  }
  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - sizeof(std::uint64_t), sizeof(std::uint64_t));
  if (stored_sum != fnv1a(bytes.data(), bytes.size() - sizeof(std::uint64_t)))
  {
    in.fail("checksum mismatch (corrupt file)");
  }

  Checkpoint ckpt;
  auto const kind = in.get<std::uint32_t>();
  if (kind != static_cast<std::uint32_t>(CheckpointKind::Autoencoder) &&
      kind != static_cast<std::uint32_t>(CheckpointKind::Policy))
  {
    in.fail("unknown checkpoint kind " + std::to_string(kind));
  }
  ckpt.kind               = static_cast<CheckpointKind>(kind);
  auto const header_bytes = in.get<std::uint64_t>();
  ckpt.header             = nlohmann::json::parse(in.take(header_bytes), nullptr, false);
  if (ckpt.header.is_discarded() || !ckpt.header.is_object())
  {
    in.fail("malformed checkpoint header");
  }
  auto const count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i)
  {
    auto const n = in.get<std::uint64_t>();
    ckpt.arrays.emplace_back();
    in.read_doubles(ckpt.arrays.back(), n);
  }
  if (in.pos() + sizeof(std::uint64_t) != bytes.size())
  {
    in.fail("trailing bytes after array table");
  }
  return ckpt;
}

void write_checkpoint(std::string const &path, Checkpoint const &ckpt)
{
  std::string const bytes = serialize_checkpoint(ckpt);
  std::string const tmp   = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
    {
      throw Error("cannot write checkpoint '" + path + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
    {
      throw Error("failed writing checkpoint '" + path + "'");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
  {
    throw Error("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint read_checkpoint(std::string const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    throw LoadError(path + ": cannot open checkpoint");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try
  {
    return deserialize_checkpoint(bytes, path);
  }
  catch (LoadError const &)
  {
    throw;
  }
  catch (std::exception const &e)
  {
    throw LoadError(path + ": " + e.what());
  }
}

}  // namespace npst3
