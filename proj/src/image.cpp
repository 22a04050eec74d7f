#include "funcnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "funcnet/errors.hpp"

namespace funcnet {

TensorF ImageBuffer::to_tensor() const { return TensorF(Shape{1, channels, height, width}, values); }

ImageBuffer ImageBuffer::from_tensor(const TensorF& t, std::size_t n) {
  if (t.shape().rank() != 4 || n >= t.shape()[0]) throw ShapeError("from_tensor: expected [N,C,H,W] with sample " + std::to_string(n));
  ImageBuffer img(t.shape()[2], t.shape()[3], t.shape()[1]);
  const std::size_t count = img.values.size();
  std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(n * count), count, img.values.begin());
  return img;
}

namespace {

// Next whitespace-separated header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  while (in) {
    const int ch = in.get();
    if (ch == EOF) break;
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in);
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PNM header field '" + tok + "'");
  }
}

}  // namespace

ImageBuffer read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  const std::string magic = header_token(in);
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw DataError(path.string() + ": unsupported image format '" + magic + "' (expected P5 or P6)");
  }
  const std::size_t width = header_number(in, path);
  const std::size_t height = header_number(in, path);
  const std::size_t maxval = header_number(in, path);
  if (maxval > 255) throw DataError(path.string() + ": only 8-bit images are supported");

  std::vector<unsigned char> raw(width * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw DataError(path.string() + ": truncated pixel data");

  ImageBuffer img(height, width, channels);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(c, y, x) = std::min(1.0f, static_cast<float>(raw[(y * width + x) * channels + c]) * scale);
  return img;
}

void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("write_pnm: images must have 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.values.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        raw[(y * img.width + x) * img.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("failed writing image " + path.string());
}

ImageBuffer to_gray(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw DataError("to_gray: expected 1 or 3 channels");
  ImageBuffer gray(img.height, img.width, 1);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      gray.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
  return gray;
}

ImageBuffer clamped(ImageBuffer img) {
  for (auto& v : img.values) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("split,path", 0) != 0) throw DataError(manifest.string() + ": expected header 'split,path'");
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": missing comma");
    std::filesystem::path p = line.substr(comma + 1);
    if (p.is_relative()) p = manifest.parent_path() / p;
    entries.push_back({line.substr(0, comma), p});
  }
  return entries;
}

std::vector<ImageBuffer> load_split(const std::vector<ManifestEntry>& manifest, const std::string& split,
                                    std::size_t channels) {
  std::vector<ImageBuffer> images;
  for (const auto& e : manifest) {
    if (e.split != split) continue;
    ImageBuffer img = read_pnm(e.path);
    if (channels == 1) {
      img = to_gray(img);
    } else if (img.channels == 1) {
      ImageBuffer rgb(img.height, img.width, 3);
      for (std::size_t c = 0; c < 3; ++c) std::copy(img.values.begin(), img.values.end(), rgb.values.begin() + static_cast<std::ptrdiff_t>(c * img.values.size()));
      img = std::move(rgb);
    }
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace funcnet
