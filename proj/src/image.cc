#include "anglereloc/image.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "anglereloc/error.h"

namespace anglereloc {

namespace {

constexpr int kMaxValue = 65535;

int ToSample(double v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * kMaxValue));
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string NextToken(std::istream& in) {
  std::string token;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  return token;
}

}  // namespace

void QuantizeTo16Bit(Image& image) {
  for (double& v : image.data) {
    v = ToSample(v) / static_cast<double>(kMaxValue);
  }
}

void WritePnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorCode::kDimensionMismatch,
                "PNM supports 1 or 3 channels, got " +
                    std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  out << (image.channels == 1 ? "P5" : "P6") << "\n"
      << image.width << " " << image.height << "\n"
      << kMaxValue << "\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(image.data.size() * 2);
  for (double v : image.data) {
    const int s = ToSample(v);
    bytes.push_back(static_cast<unsigned char>(s >> 8));
    bytes.push_back(static_cast<unsigned char>(s & 0xff));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::kIo, "write failed for " + path.string());
  }
}

Image ReadPnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  const std::string magic = NextToken(in);
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw Error(ErrorCode::kParseError,
                path.string() + ": unsupported PNM magic '" + magic + "'");
  }
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(NextToken(in));
    height = std::stoi(NextToken(in));
    maxval = std::stoi(NextToken(in));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError, path.string() + ": malformed header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > kMaxValue) {
    throw Error(ErrorCode::kParseError, path.string() + ": bad dimensions");
  }
  in.get();  // single whitespace byte before the raster

  Image image(width, height, channels);
  const int bytes_per_sample = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(image.data.size() * bytes_per_sample);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(ErrorCode::kParseError, path.string() + ": truncated raster");
  }
  for (size_t i = 0; i < image.data.size(); ++i) {
    const int s = bytes_per_sample == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1]
                                        : raw[i];
    image.data[i] = s / static_cast<double>(maxval);
  }
  return image;
}

}  // namespace anglereloc
