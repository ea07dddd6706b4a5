#include "hsnerf/hypercube.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "hsnerf/common.hpp"

namespace hsnerf {

static_assert(std::endian::native == std::endian::little,
              "BIL I/O assumes a little-endian host");

// ---------------------------------------------------------------- Mask

Mask::Mask(int height, int width, bool fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw InvalidArgument("Mask: negative dimensions");
  values_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

Mask Mask::from_png(const std::filesystem::path& path) {
  const Image8 img = read_png(path, 1);
  Mask m(img.height, img.width);
  for (std::size_t i = 0; i < m.values_.size(); ++i) m.values_[i] = img.pixels[i] != 0 ? 1 : 0;
  return m;
}

void Mask::write_png(const std::filesystem::path& path) const {
  Image8 img(width_, height_, 1);
  for (std::size_t i = 0; i < values_.size(); ++i) img.pixels[i] = values_[i] ? 255 : 0;
  hsnerf::write_png(path, img);
}

// ---------------------------------------------------------------- HyperCube

HyperCube::HyperCube(int height, int width, std::vector<double> wavelengths_nm,
                     std::vector<float> data, CubeKind kind)
    : height_(height), width_(width), wavelengths_(std::move(wavelengths_nm)),
      data_(std::move(data)), kind_(kind) {
  if (height <= 0 || width <= 0) throw InvalidArgument("HyperCube: dimensions must be positive");
  if (wavelengths_.empty()) throw InvalidArgument("HyperCube: at least one band required");
  if (data_.size() != pixel_count() * wavelengths_.size()) {
    throw InvalidArgument("HyperCube: data size does not match H*W*L");
  }
  validate();
}

HyperCube::HyperCube(int height, int width, std::vector<double> wavelengths_nm, CubeKind kind)
    : HyperCube(height, width, wavelengths_nm,
                std::vector<float>(static_cast<std::size_t>(std::max(height, 0)) *
                                   std::max(width, 0) * wavelengths_nm.size(), 0.0f),
                kind) {}

void HyperCube::validate() const {
  for (std::size_t i = 0; i < wavelengths_.size(); ++i) {
    if (!std::isfinite(wavelengths_[i])) throw InvalidArgument("HyperCube: non-finite wavelength");
    if (i > 0 && !(wavelengths_[i] > wavelengths_[i - 1])) {
      throw InvalidArgument("HyperCube: wavelengths must be strictly increasing");
    }
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw InvalidArgument("HyperCube: non-finite value");
    if (v < 0.0f) throw InvalidArgument("HyperCube: negative value");
    if (kind_ == CubeKind::Calibrated && v > 1.0f) {
      throw InvalidArgument("HyperCube: calibrated value above 1");
    }
  }
}

// ---------------------------------------------------------------- BIL I/O

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::map<std::string, std::string> parse_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open header: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (first && lower(line) == "envi") {
      first = false;
      continue;
    }
    first = false;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed header line: " + line);
    std::string key = lower(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '{') {
      while (value.find('}') == std::string::npos) {
        std::string more;
        if (!std::getline(in, more)) throw IoError("unterminated list for key: " + key);
        value += " " + trim(more);
      }
    }
    kv[key] = value;
  }
  return kv;
}

long parse_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw IoError("header missing key: " + key);
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size()) throw IoError("bad integer for " + key);
    return v;
  } catch (const std::logic_error&) {
    throw IoError("bad integer for " + key + ": " + it->second);
  }
}

std::vector<double> parse_list(const std::string& raw) {
  const auto open = raw.find('{');
  const auto close = raw.find('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw IoError("wavelength list must be enclosed in braces");
  }
  std::string body = raw.substr(open + 1, close - open - 1);
  std::replace(body.begin(), body.end(), ',', ' ');
  std::istringstream ss(body);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw IoError("bad wavelength: " + tok);
    } catch (const std::logic_error&) {
      throw IoError("bad wavelength: " + tok);
    }
  }
  return out;
}

}  // namespace

HyperCube read_bil(const std::filesystem::path& header_path, const std::filesystem::path& data_path) {
  const auto kv = parse_header(header_path);
  const long samples = parse_int(kv, "samples");
  const long lines = parse_int(kv, "lines");
  const long bands = parse_int(kv, "bands");
  if (samples <= 0 || lines <= 0 || bands <= 0) throw IoError("header dimensions must be positive");
  const auto il = kv.find("interleave");
  if (il == kv.end() || lower(il->second) != "bil") throw IoError("only interleave = bil is supported");
  if (parse_int(kv, "data type") != 4) throw IoError("only data type = 4 (float32) is supported");
  if (kv.count("byte order") && parse_int(kv, "byte order") != 0) {
    throw IoError("only little-endian (byte order = 0) data is supported");
  }
  if (kv.count("header offset") && parse_int(kv, "header offset") != 0) {
    throw IoError("non-zero header offset is not supported");
  }
  const auto wl = kv.find("wavelength");
  if (wl == kv.end()) throw IoError("header missing key: wavelength");
  std::vector<double> wavelengths = parse_list(wl->second);
  if (static_cast<long>(wavelengths.size()) != bands) {
    throw IoError("wavelength count does not match bands");
  }
  for (std::size_t i = 1; i < wavelengths.size(); ++i) {
    if (!(wavelengths[i] > wavelengths[i - 1])) throw IoError("wavelengths are not strictly increasing");
  }
  CubeKind kind = CubeKind::Raw;
  if (const auto c = kv.find("calibrated"); c != kv.end()) {
    const std::string v = lower(c->second);
    if (v == "1" || v == "true" || v == "yes") kind = CubeKind::Calibrated;
  }

  const std::size_t elements = static_cast<std::size_t>(samples) * lines * bands;
  std::error_code ec;
  const auto size = std::filesystem::file_size(data_path, ec);
  if (ec) throw IoError("cannot stat data file: " + data_path.string());
  if (size != elements * sizeof(float)) {
    throw IoError("data file size mismatch: expected " + std::to_string(elements * sizeof(float)) +
                  " bytes, found " + std::to_string(size));
  }
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw IoError("cannot open data file: " + data_path.string());
  std::vector<float> bil(elements);
  in.read(reinterpret_cast<char*>(bil.data()), static_cast<std::streamsize>(elements * sizeof(float)));
  if (!in) throw IoError("short read on data file: " + data_path.string());

  // File order: for each line y, for each band b, `samples` values.
  std::vector<float> data(elements);
  const std::size_t W = samples;
  const std::size_t L = bands;
  for (std::size_t y = 0; y < static_cast<std::size_t>(lines); ++y) {
    for (std::size_t b = 0; b < L; ++b) {
      const float* row = bil.data() + (y * L + b) * W;
      for (std::size_t x = 0; x < W; ++x) data[(y * W + x) * L + b] = row[x];
    }
  }
  try {
    return HyperCube(static_cast<int>(lines), static_cast<int>(samples), std::move(wavelengths),
                     std::move(data), kind);
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid cube contents: ") + e.what());
  }
}

void write_bil(const HyperCube& cube, const std::filesystem::path& header_path,
               const std::filesystem::path& data_path) {
  if (cube.height() <= 0 || cube.width() <= 0 || cube.bands() <= 0) {
    throw InvalidArgument("write_bil: cube has an empty dimension");
  }
  std::ofstream hdr(header_path);
  if (!hdr) throw IoError("cannot open header for writing: " + header_path.string());
  hdr << "ENVI\n"
      << "samples = " << cube.width() << "\n"
      << "lines = " << cube.height() << "\n"
      << "bands = " << cube.bands() << "\n"
      << "header offset = 0\n"
      << "data type = 4\n"
      << "interleave = bil\n"
      << "byte order = 0\n"
      << "calibrated = " << (cube.kind() == CubeKind::Calibrated ? 1 : 0) << "\n"
      << "wavelength units = Nanometers\n"
      << "wavelength = {";
  hdr << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int b = 0; b < cube.bands(); ++b) hdr << (b ? ", " : " ") << cube.wavelengths()[b];
  hdr << " }\n";
  if (!hdr) throw IoError("failed writing header: " + header_path.string());

  const std::size_t W = cube.width();
  const std::size_t L = cube.bands();
  std::vector<float> row(W);
  std::ofstream out(data_path, std::ios::binary);
  if (!out) throw IoError("cannot open data file for writing: " + data_path.string());
  const auto data = cube.data();
  for (std::size_t y = 0; y < static_cast<std::size_t>(cube.height()); ++y) {
    for (std::size_t b = 0; b < L; ++b) {
      for (std::size_t x = 0; x < W; ++x) row[x] = data[(y * W + x) * L + b];
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(W * sizeof(float)));
    }
  }
  if (!out) throw IoError("failed writing data: " + data_path.string());
}

// ---------------------------------------------------------------- band ops

int nearest_band(std::span<const double> wavelengths, double nm) {
  if (wavelengths.empty()) throw InvalidArgument("nearest_band: empty wavelength grid");
  if (!(nm >= wavelengths.front() && nm <= wavelengths.back())) {
    throw InvalidArgument("wavelength " + std::to_string(nm) + " nm outside cube range");
  }
  int best = 0;
  double best_d = std::abs(wavelengths[0] - nm);
  for (std::size_t i = 1; i < wavelengths.size(); ++i) {
    const double d = std::abs(wavelengths[i] - nm);
    if (d < best_d) {  // strict: equal distance keeps the lower index
      best = static_cast<int>(i);
      best_d = d;
    }
  }
  return best;
}

BandImage band_slice(const HyperCube& cube, double nm) {
  const int b = nearest_band(cube.wavelengths(), nm);
  BandImage img{cube.height(), cube.width(), std::vector<float>(cube.pixel_count())};
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) img.values[p] = cube.spectrum(p)[b];
  return img;
}

std::vector<float> composite_values(const HyperCube& cube, const BandTriplet& triplet) {
  if (cube.kind() != CubeKind::Calibrated) {
    throw InvalidArgument("composite requires a calibrated cube");
  }
  const int bands[3] = {nearest_band(cube.wavelengths(), triplet.r_nm),
                        nearest_band(cube.wavelengths(), triplet.g_nm),
                        nearest_band(cube.wavelengths(), triplet.b_nm)};
  std::vector<float> rgb(cube.pixel_count() * 3);
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    const auto s = cube.spectrum(p);
    for (int c = 0; c < 3; ++c) rgb[p * 3 + c] = std::clamp(s[bands[c]], 0.0f, 1.0f);
  }
  return rgb;
}

Image8 composite(const HyperCube& cube, const BandTriplet& triplet) {
  const auto rgb = composite_values(cube, triplet);
  Image8 img(cube.width(), cube.height(), 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) img.pixels[i] = to_byte(rgb[i]);
  return img;
}

std::vector<double> roi_mean_spectrum(const HyperCube& cube, const Mask& mask) {
  if (mask.height() != cube.height() || mask.width() != cube.width()) {
    throw InvalidArgument("roi_mean_spectrum: mask dimensions differ from cube");
  }
  std::vector<double> mean(cube.bands(), 0.0);
  std::size_t n = 0;
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    if (!mask.at(p)) continue;
    const auto s = cube.spectrum(p);
    for (int b = 0; b < cube.bands(); ++b) mean[b] += s[b];
    ++n;
  }
  if (n == 0) throw InvalidArgument("roi_mean_spectrum: empty mask");
  for (auto& v : mean) v /= static_cast<double>(n);
  return mean;
}

void write_spectrum_csv(const std::filesystem::path& path, std::span<const double> wavelengths,
                        std::span<const double> values) {
  if (wavelengths.size() != values.size()) throw InvalidArgument("spectrum CSV: length mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "wavelength_nm,reflectance\n" << std::setprecision(10);
  for (std::size_t i = 0; i < values.size(); ++i) out << wavelengths[i] << "," << values[i] << "\n";
}

}  // namespace hsnerf
