// PNG encode/decode backed by OpenCV imgcodecs; the rest of the project never
// touches cv types.
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-enum-enum-conversion"
#include <opencv2/imgcodecs.hpp>
#pragma GCC diagnostic pop

#include <fstream>
#include <stdexcept>

#include "psc/image.hpp"

namespace psc {

std::vector<uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("encode_png: empty image");
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    uint8_t* row = bgr.ptr<uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x * 3 + 0] = img.at(x, y, 2);
      row[x * 3 + 1] = img.at(x, y, 1);
      row[x * 3 + 2] = img.at(x, y, 0);
    }
  }
  std::vector<uint8_t> out;
  if (!cv::imencode(".png", bgr, out)) throw std::runtime_error("encode_png: imencode failed");
  return out;
}

Image decode_png(const std::vector<uint8_t>& bytes) {
  cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("decode_png: bad PNG data");
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < img.height; ++y) {
    const uint8_t* row = bgr.ptr<uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y, 0) = row[x * 3 + 2];
      img.at(x, y, 1) = row[x * 3 + 1];
      img.at(x, y, 2) = row[x * 3 + 0];
    }
  }
  return img;
}

void save_png(const std::string& path, const Image& img) {
  auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("save_png: write failed for " + path);
}

Image load_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_png: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace psc
