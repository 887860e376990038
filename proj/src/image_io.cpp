#include "stylefp/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace stylefp {

namespace {

ImageTensor from_mat_rgb8(const cv::Mat& rgb) {
    ImageTensor img;
    img.height = rgb.rows;
    img.width = rgb.cols;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(rgb.rows) * rgb.cols * 3);
    std::size_t i = 0;
    for (int y = 0; y < rgb.rows; ++y) {
        const cv::Vec3b* row = rgb.ptr<cv::Vec3b>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            img.pixels[i++] = row[x][0] / 255.0;
            img.pixels[i++] = row[x][1] / 255.0;
            img.pixels[i++] = row[x][2] / 255.0;
        }
    }
    return img;
}

}  // namespace

ImageTensor load_image(const std::string& path) {
    cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw IoError("cannot read image file '" + path + "'");
    }
    cv::Mat rgb;
    if (raw.channels() == 1) {
        std::cerr << "warning: '" << path << "' is grayscale, replicating to 3 channels\n";
        cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB);
    } else if (raw.channels() == 4) {
        std::cerr << "warning: '" << path << "' has an alpha channel, dropping it\n";
        cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
    } else if (raw.channels() == 3) {
        cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
    } else {
        throw IoError("unsupported channel count " + std::to_string(raw.channels()) + " in '" + path + "'");
    }
    if (rgb.depth() != CV_8U) {
        rgb.convertTo(rgb, CV_8U, 255.0 / 65535.0);
    }
    return from_mat_rgb8(rgb);
}

void save_image(const ImageTensor& image, const std::string& path) {
    image.validate();
    cv::Mat rgb(image.height, image.width, CV_8UC3);
    std::size_t i = 0;
    for (int y = 0; y < image.height; ++y) {
        cv::Vec3b* row = rgb.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                row[x][c] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i++], 0.0, 1.0) * 255.0));
            }
        }
    }
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path, bgr)) {
        throw IoError("cannot write image file '" + path + "'");
    }
}

bool is_supported_image_file(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return false;
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == "png" || ext == "jpg" || ext == "jpeg" || ext == "bmp" || ext == "ppm" || ext == "webp" ||
           ext == "tif" || ext == "tiff";
}

}  // namespace stylefp
