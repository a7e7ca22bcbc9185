#include "ssem/grid.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "ssem/error.hpp"

namespace ssem {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'S', 'G', 'R', 'I', 'D', '1', '\0'};
constexpr std::uint8_t kFlagElevation = 0x1;
constexpr std::uint8_t kFlagTruth = 0x2;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw FormatError(std::string("truncated scene file while reading ") + what);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

Eigen::MatrixXd as_matrix(const std::vector<double>& v, std::size_t m) {
  Eigen::MatrixXd out(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = v[i * m + j];
  return out;
}

void check_gaussian(const std::vector<double>& mean, const std::vector<double>& cov,
                    std::size_t m, const char* name) {
  if (mean.size() != m)
    throw SpecError(std::string(name) + "_mean has wrong dimension");
  if (cov.size() != m * m)
    throw SpecError(std::string(name) + "_cov must have m*m entries");
  for (double v : mean)
    if (!std::isfinite(v)) throw SpecError(std::string(name) + "_mean not finite");
  const Eigen::MatrixXd c = as_matrix(cov, m);
  if (!c.allFinite() || (c - c.transpose()).cwiseAbs().maxCoeff() > 0.0)
    throw SpecError(std::string(name) + "_cov must be finite and symmetric");
  if (Eigen::LLT<Eigen::MatrixXd>(c).info() != Eigen::Success)
    throw SpecError(std::string(name) + "_cov is not positive definite");
}

std::vector<double> raw_elevation(const SceneSpec& spec) {
  std::vector<double> elev(std::size_t{spec.width} * spec.height);
  const double wx = spec.width > 1 ? spec.width - 1.0 : 1.0;
  const double wy = spec.height > 1 ? spec.height - 1.0 : 1.0;
  const double k = 2.0 * M_PI / spec.bump_period;
  for (std::uint32_t r = 0; r < spec.height; ++r) {
    for (std::uint32_t c = 0; c < spec.width; ++c) {
      elev[std::size_t{r} * spec.width + c] =
          spec.ramp_x * c / wx + spec.ramp_y * r / wy +
          spec.bump_amplitude * std::sin(k * c) * std::sin(k * r);
    }
  }
  return elev;
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

/// Draws `want` distinct pixels per class from the candidate lists.
LabelSet draw_balanced(std::array<std::vector<std::size_t>, 2> pool, std::size_t total,
                       std::uint32_t width, std::mt19937_64& rng) {
  std::array<std::size_t, 2> want{total / 2, total / 2 + total % 2};
  for (int c = 0; c < 2; ++c) {
    const int other = 1 - c;
    if (want[c] > pool[c].size()) {
      want[other] += want[c] - pool[c].size();
      want[c] = pool[c].size();
    }
  }
  want[0] = std::min(want[0], pool[0].size());
  want[1] = std::min(want[1], pool[1].size());

  LabelSet out;
  for (int c = 0; c < 2; ++c) {
    auto& candidates = pool[c];
    // partial Fisher-Yates
    for (std::size_t i = 0; i < want[c]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
      const auto p = candidates[i];
      out.entries.push_back({static_cast<std::uint32_t>(p / width),
                             static_cast<std::uint32_t>(p % width),
                             static_cast<std::uint8_t>(c)});
    }
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const Label& a, const Label& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  return out;
}

}  // namespace

std::span<const double> RasterScene::channel(std::uint32_t k) const {
  return {data.data() + std::size_t{k} * pixel_count(), pixel_count()};
}

std::span<double> RasterScene::channel(std::uint32_t k) {
  return {data.data() + std::size_t{k} * pixel_count(), pixel_count()};
}

void RasterScene::validate() const {
  if (data.size() != pixel_count() * channels)
    throw DataError("scene data length does not equal width*height*channels");
  for (double v : data)
    if (!std::isfinite(v)) throw DataError("scene contains a non-finite feature value");
  if (elevation_channel && *elevation_channel >= channels)
    throw DataError("elevation_channel out of range");
  if (truth) {
    if (truth->size() != pixel_count()) throw DataError("truth grid has wrong size");
    for (auto t : *truth)
      if (t > 1) throw DataError("truth grid holds a class other than 0/1");
  }
}

std::size_t LabelSet::count(std::uint8_t cls) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [cls](const Label& l) { return l.cls == cls; }));
}

void LabelSet::validate(std::uint32_t width, std::uint32_t height) const {
  std::vector<std::uint8_t> seen(std::size_t{width} * height, 0);
  for (const auto& l : entries) {
    if (l.row >= height || l.col >= width)
      throw DataError("label (" + std::to_string(l.row) + "," + std::to_string(l.col) +
                      ") outside the grid");
    if (l.cls > 1) throw DataError("label class must be 0 or 1");
    auto& s = seen[std::size_t{l.row} * width + l.col];
    if (s) throw DataError("duplicate label at (" + std::to_string(l.row) + "," +
                           std::to_string(l.col) + ")");
    s = 1;
  }
}

std::vector<std::int8_t> LabelSet::dense(std::uint32_t width, std::uint32_t height) const {
  validate(width, height);
  std::vector<std::int8_t> out(std::size_t{width} * height, -1);
  for (const auto& l : entries)
    out[std::size_t{l.row} * width + l.col] = static_cast<std::int8_t>(l.cls);
  return out;
}

void write_scene(const RasterScene& scene, std::ostream& out) {
  scene.validate();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, scene.width);
  put_u32(out, scene.height);
  put_u32(out, scene.channels);
  std::uint8_t flags = 0;
  if (scene.elevation_channel) flags |= kFlagElevation;
  if (scene.truth) flags |= kFlagTruth;
  out.put(static_cast<char>(flags));
  if (scene.elevation_channel) put_u32(out, *scene.elevation_channel);
  for (double v : scene.data) put_f64(out, v);
  if (scene.truth)
    out.write(reinterpret_cast<const char*>(scene.truth->data()),
              static_cast<std::streamsize>(scene.truth->size()));
}

void save_scene(const RasterScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_scene(scene, out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

RasterScene read_scene(std::istream& in) {
  std::array<char, 8> magic{};
  read_exact(in, magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("bad magic: not an SSGRID1 scene file");

  RasterScene scene;
  scene.width = get_u32(in, "width");
  scene.height = get_u32(in, "height");
  scene.channels = get_u32(in, "channels");
  char flag_byte = 0;
  read_exact(in, &flag_byte, 1, "flags");
  const auto flags = static_cast<std::uint8_t>(flag_byte);
  if (flags & ~(kFlagElevation | kFlagTruth)) throw FormatError("unknown flag bits set");
  if (flags & kFlagElevation) scene.elevation_channel = get_u32(in, "elevation_channel");

  const std::uint64_t count =
      std::uint64_t{scene.width} * scene.height * std::uint64_t{scene.channels};
  if (count > (std::uint64_t{1} << 34)) throw FormatError("scene dimensions implausibly large");
  scene.data.resize(static_cast<std::size_t>(count));
  std::vector<unsigned char> buf(static_cast<std::size_t>(count) * 8);
  read_exact(in, reinterpret_cast<char*>(buf.data()), buf.size(), "feature payload");
  for (std::size_t i = 0; i < scene.data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | buf[i * 8 + b];
    scene.data[i] = std::bit_cast<double>(bits);
  }
  if (flags & kFlagTruth) {
    std::vector<std::uint8_t> truth(scene.pixel_count());
    read_exact(in, reinterpret_cast<char*>(truth.data()), truth.size(), "truth grid");
    scene.truth = std::move(truth);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after scene payload");
  scene.validate();
  return scene;
}

RasterScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_scene(in);
}

LabelSet parse_labels(std::istream& in) {
  LabelSet out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream fields(line);
    long long row = -1, col = -1, cls = -1;
    char c1 = 0, c2 = 0;
    if (!(fields >> row >> c1 >> col >> c2 >> cls) || c1 != ',' || c2 != ',' ||
        !(fields >> std::ws).eof() || row < 0 || col < 0 || row > UINT32_MAX ||
        col > UINT32_MAX || (cls != 0 && cls != 1))
      throw FormatError("label line " + std::to_string(lineno) + ": expected row,col,class");
    out.entries.push_back({static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col),
                           static_cast<std::uint8_t>(cls)});
  }
  return out;
}

LabelSet load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_labels(in);
}

void save_labels(const LabelSet& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "# row,col,class\n";
  for (const auto& l : labels.entries)
    out << l.row << ',' << l.col << ',' << int{l.cls} << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void SceneSpec::validate() const {
  if (width == 0 || height == 0) throw SpecError("width and height must be positive");
  const std::size_t m = feature_count();
  if (m == 0) throw SpecError("at least one feature channel is required");
  check_gaussian(dry_mean, dry_cov, m, "dry");
  check_gaussian(flood_mean, flood_cov, m, "flood");
  check_gaussian(obstacle_mean, obstacle_cov, m, "obstacle");
  if (!(obstacle_fraction >= 0.0 && obstacle_fraction <= 1.0))
    throw SpecError("obstacle_fraction must lie in [0,1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw SpecError("noise_sigma must be finite and non-negative");
  if (!(label_ratio > 0.0 && label_ratio <= 1.0)) throw SpecError("label_ratio must lie in (0,1]");
  if (!(water_quantile >= 0.0 && water_quantile <= 1.0))
    throw SpecError("water_quantile must lie in [0,1]");
  if (!(bump_period > 0.0) || !std::isfinite(bump_amplitude) || !std::isfinite(ramp_x) ||
      !std::isfinite(ramp_y))
    throw SpecError("elevation model parameters must be finite, bump_period positive");
  if (water_level) {
    const auto elev = raw_elevation(*this);
    const auto [lo, hi] = std::minmax_element(elev.begin(), elev.end());
    if (!(*water_level >= *lo && *water_level <= *hi))
      throw SpecError("water_level outside the elevation range");
  }
}

namespace {

std::vector<double> parse_list(const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument(item);
    out.push_back(v);
  }
  return out;
}

template <typename T>
T parse_scalar(const std::string& value) {
  std::istringstream ss(value);
  T v{};
  if (!(ss >> v) || !(ss >> std::ws).eof()) throw std::invalid_argument(value);
  return v;
}

}  // namespace

SceneSpec parse_scene_spec(std::istream& in) {
  SceneSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "spec line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw SpecError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "width") spec.width = parse_scalar<std::uint32_t>(value);
      else if (key == "height") spec.height = parse_scalar<std::uint32_t>(value);
      else if (key == "ramp_x") spec.ramp_x = parse_scalar<double>(value);
      else if (key == "ramp_y") spec.ramp_y = parse_scalar<double>(value);
      else if (key == "bump_amplitude") spec.bump_amplitude = parse_scalar<double>(value);
      else if (key == "bump_period") spec.bump_period = parse_scalar<double>(value);
      else if (key == "water_level") spec.water_level = parse_scalar<double>(value);
      else if (key == "water_quantile") spec.water_quantile = parse_scalar<double>(value);
      else if (key == "dry_mean") spec.dry_mean = parse_list(value);
      else if (key == "flood_mean") spec.flood_mean = parse_list(value);
      else if (key == "obstacle_mean") spec.obstacle_mean = parse_list(value);
      else if (key == "dry_cov") spec.dry_cov = parse_list(value);
      else if (key == "flood_cov") spec.flood_cov = parse_list(value);
      else if (key == "obstacle_cov") spec.obstacle_cov = parse_list(value);
      else if (key == "obstacle_fraction") spec.obstacle_fraction = parse_scalar<double>(value);
      else if (key == "noise_sigma") spec.noise_sigma = parse_scalar<double>(value);
      else if (key == "label_ratio") spec.label_ratio = parse_scalar<double>(value);
      else if (key == "rng_seed") spec.rng_seed = parse_scalar<std::uint64_t>(value);
      else throw SpecError(where + "unknown key '" + key + "'");
    } catch (const SpecError&) {
      throw;
    } catch (const std::exception&) {
      throw SpecError(where + "bad value for '" + key + "'");
    }
  }
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_scene_spec(in);
}

GeneratedScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t n = std::size_t{spec.width} * spec.height;
  const std::size_t m = spec.feature_count();
  std::mt19937_64 rng(spec.rng_seed);

  GeneratedScene out;
  const auto elevation = raw_elevation(spec);
  out.water_level = spec.water_level ? *spec.water_level : quantile(elevation, spec.water_quantile);

  std::vector<std::uint8_t> truth(n);
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t p = 0; p < n; ++p) {
    truth[p] = elevation[p] < out.water_level ? 1 : 0;
    members[truth[p]].push_back(p);
  }

  out.obstacle.assign(n, 0);
  for (auto& pixels : members) {
    const auto k = static_cast<std::size_t>(std::llround(spec.obstacle_fraction * pixels.size()));
    auto shuffled = pixels;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t i = 0; i < k; ++i) out.obstacle[shuffled[i]] = 1;
  }

  const std::array<Eigen::MatrixXd, 3> factors{
      Eigen::LLT<Eigen::MatrixXd>(as_matrix(spec.dry_cov, m)).matrixL().toDenseMatrix(),
      Eigen::LLT<Eigen::MatrixXd>(as_matrix(spec.flood_cov, m)).matrixL().toDenseMatrix(),
      Eigen::LLT<Eigen::MatrixXd>(as_matrix(spec.obstacle_cov, m)).matrixL().toDenseMatrix()};
  const std::array<const std::vector<double>*, 3> means{&spec.dry_mean, &spec.flood_mean,
                                                        &spec.obstacle_mean};

  RasterScene& scene = out.scene;
  scene.width = spec.width;
  scene.height = spec.height;
  scene.channels = static_cast<std::uint32_t>(m + 1);
  scene.data.assign(n * scene.channels, 0.0);
  scene.elevation_channel = static_cast<std::uint32_t>(m);

  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(m);
  for (std::size_t p = 0; p < n; ++p) {
    const int source = out.obstacle[p] ? 2 : truth[p];
    for (std::size_t k = 0; k < m; ++k) z[k] = gauss(rng);
    const Eigen::VectorXd x = factors[source] * z;
    for (std::size_t k = 0; k < m; ++k) {
      double v = (*means[source])[k] + x[k];
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * gauss(rng);
      scene.data[k * n + p] = v;
    }
  }
  std::copy(elevation.begin(), elevation.end(), scene.data.begin() + m * n);
  scene.truth = std::move(truth);

  std::array<std::vector<std::size_t>, 2> clean;
  for (std::size_t p = 0; p < n; ++p)
    if (!out.obstacle[p]) clean[(*scene.truth)[p]].push_back(p);
  const auto total = static_cast<std::size_t>(std::ceil(spec.label_ratio * n - 1e-9));
  out.labels = draw_balanced(std::move(clean), std::min(total, n), spec.width, rng);
  return out;
}

LabelSet sample_labels(const RasterScene& scene, double ratio, std::uint64_t rng_seed) {
  if (!scene.truth) throw DataError("sample_labels requires a truth grid");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw DataError("label ratio must lie in (0,1]");
  const std::size_t n = scene.pixel_count();
  std::array<std::vector<std::size_t>, 2> pool;
  for (std::size_t p = 0; p < n; ++p) pool[(*scene.truth)[p]].push_back(p);
  if (pool[0].empty() || pool[1].empty())
    throw DataError("sample_labels requires both classes in the truth grid");
  const auto total = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9)));
  std::mt19937_64 rng(rng_seed);
  return draw_balanced(std::move(pool), total, scene.width, rng);
}

Eigen::MatrixXd feature_matrix(const RasterScene& scene, bool include_elevation) {
  std::vector<std::uint32_t> keep;
  for (std::uint32_t k = 0; k < scene.channels; ++k)
    if (include_elevation || !scene.elevation_channel || *scene.elevation_channel != k)
      keep.push_back(k);
  const std::size_t n = scene.pixel_count();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const auto ch = scene.channel(keep[j]);
    for (std::size_t p = 0; p < n; ++p) out(static_cast<Eigen::Index>(p), j) = ch[p];
  }
  return out;
}

std::vector<double> elevation_values(const RasterScene& scene) {
  if (!scene.elevation_channel) throw DataError("scene has no elevation channel");
  const auto ch = scene.channel(*scene.elevation_channel);
  return {ch.begin(), ch.end()};
}

RasterScene single_channel(std::uint32_t width, std::uint32_t height,
                           std::span<const double> values) {
  RasterScene s;
  s.width = width;
  s.height = height;
  s.channels = 1;
  s.data.assign(values.begin(), values.end());
  s.validate();
  return s;
}

}  // namespace ssem
