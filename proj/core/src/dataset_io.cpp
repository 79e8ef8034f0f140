#include "segp/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "segp/config.hpp"

namespace segp {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes little endian");

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_doubles(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  // Column k is trajectory k; Eigen stores columns contiguously.
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(double))));
  check_written(out, path);
}

std::vector<char> read_bytes(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != expected) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(expected) +
                             " bytes, found " + std::to_string(size));
  }
  in.seekg(0);
  std::vector<char> buf(size);
  in.read(buf.data(), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("read failed for " + path.string());
  return buf;
}

Matrix read_doubles(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
  const auto bytes = read_bytes(path, static_cast<std::size_t>(rows * cols) * sizeof(double));
  Matrix m(rows, cols);
  std::memcpy(m.data(), bytes.data(), bytes.size());
  return m;
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["config"] = dataset_config_to_json(data.config);
  manifest["seed"] = data.seed;
  manifest["count"] = data.count;
  manifest["rng"] = kRngName;
  manifest["gaussian_method"] = kGaussianMethod;
  manifest["observation_times"] = data.config.grid().points();
  manifest["latent_rows"] = data.latents.rows();
  manifest["input_rows"] = data.inputs.rows();
  manifest["layout"] = {
      {"latents.bin", "float64 LE, trajectory-major, dimension-major within trajectory"},
      {"inputs.bin", "float64 LE fine-grid inputs, trajectory-major, channel-major"},
      {"frames.bin", "uint8 {0,1}, trajectory-major, frame-major, row-major"}};
  {
    const auto path = dir / "manifest.json";
    std::ofstream out = open_out(path);
    out << manifest.dump(2) << '\n';
    check_written(out, path);
  }
  write_doubles(data.latents, dir / "latents.bin");
  write_doubles(data.inputs, dir / "inputs.bin");
  {
    const auto path = dir / "frames.bin";
    std::ofstream out = open_out(path);
    out.write(reinterpret_cast<const char*>(data.frames.data()),
              static_cast<std::streamsize>(data.frames.size()));
    check_written(out, path);
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format_version", -1) != kDatasetFormatVersion) {
    throw std::runtime_error(manifest_path.string() + ": unsupported format version");
  }
  Dataset ds;
  ds.config = dataset_config_from_json(manifest.at("config"));
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.count = manifest.at("count").get<int>();
  ds.config.count = ds.count;
  const auto latent_rows = manifest.at("latent_rows").get<Eigen::Index>();
  const auto input_rows = manifest.at("input_rows").get<Eigen::Index>();
  if (latent_rows != static_cast<Eigen::Index>(ds.config.latent_dim()) * ds.config.frames) {
    throw std::runtime_error(manifest_path.string() + ": latent_rows disagrees with config");
  }
  ds.latents = read_doubles(dir / "latents.bin", latent_rows, ds.count);
  ds.inputs = read_doubles(dir / "inputs.bin", input_rows, ds.count);
  const std::size_t frame_bytes = static_cast<std::size_t>(ds.count) * ds.config.frames *
                                  ds.config.canvas * ds.config.canvas;
  const auto bytes = read_bytes(dir / "frames.bin", frame_bytes);
  ds.frames.assign(bytes.begin(), bytes.end());
  return ds;
}

}  // namespace segp
