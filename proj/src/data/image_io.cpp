#include "assl/data/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <stdexcept>

namespace assl::data {

std::optional<Image8> decode_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) return std::nullopt;
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image8 img;
  img.height = rgb.rows;
  img.width = rgb.cols;
  img.rgb.resize(static_cast<size_t>(img.height * img.width * 3));
  if (rgb.isContinuous()) {
    std::memcpy(img.rgb.data(), rgb.data, img.rgb.size());
  } else {
    for (int y = 0; y < rgb.rows; ++y)
      std::memcpy(img.rgb.data() + static_cast<size_t>(y) * img.width * 3,
                  rgb.ptr(y), static_cast<size_t>(img.width) * 3);
  }
  return img;
}

void write_image(const std::string& path, const Image8& image) {
  cv::Mat rgb(static_cast<int>(image.height), static_cast<int>(image.width),
              CV_8UC3, const_cast<uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr))
    throw std::runtime_error("failed to write image: " + path);
}

ImageRecord load_record(const std::string& path,
                        std::optional<RoofClass> label) {
  auto img = decode_image(path);
  if (!img) throw std::runtime_error("cannot decode image: " + path);
  ImageRecord rec{path, std::move(*img), label};
  validate_record(rec);
  return rec;
}

}  // namespace assl::data
