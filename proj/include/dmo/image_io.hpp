#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmo/grid.hpp"
#include "dmo/operators.hpp"
#include "dmo/prior.hpp"

namespace dmo {

namespace detail {

inline int pnm_token(std::istream& in) {
    // skips whitespace and '#' comment lines
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    in >> v;
    if (!in) throw std::runtime_error("pnm: malformed header");
    return v;
}

}  // namespace detail

// Binary PGM (P5) / PPM (P6), 8-bit, values mapped to [-1, 1] via v/127.5 - 1.
inline ImageGrid load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_image: cannot open " + path.string());
    std::string magic;
    in >> magic;
    int channels = 0;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw std::runtime_error("load_image: unsupported format in " + path.string());
    const int w = detail::pnm_token(in);
    const int h = detail::pnm_token(in);
    const int maxval = detail::pnm_token(in);
    if (maxval != 255) throw std::runtime_error("load_image: only 8-bit images supported");
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw std::runtime_error("load_image: truncated pixel data in " + path.string());
    ImageGrid img(GridShape{h, w, channels});
    for (std::size_t i = 0; i < raw.size(); ++i) img[i] = raw[i] / 127.5 - 1.0;
    return img;
}

inline void save_image(const std::filesystem::path& path, const ImageGrid& img) {
    const int c = img.shape().channels;
    if (c != 1 && c != 3)
        throw std::invalid_argument("save_image: only 1- or 3-channel images supported");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_image: cannot open " + path.string());
    out << (c == 1 ? "P5" : "P6") << "\n"
        << img.shape().width << " " << img.shape().height << "\n255\n";
    std::vector<unsigned char> raw(img.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = std::clamp((img[i] + 1.0) * 127.5, 0.0, 255.0);
        raw[i] = static_cast<unsigned char>(std::lround(v));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("save_image: write failed for " + path.string());
}

// Raw float64 dump: one-line JSON header followed by little-endian doubles.
inline void save_raw(const std::filesystem::path& path, const ImageGrid& img) {
    nlohmann::json h;
    h["height"] = img.shape().height;
    h["width"] = img.shape().width;
    h["channels"] = img.shape().channels;
    h["dtype"] = "float64-le";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_raw: cannot open " + path.string());
    out << h.dump() << "\n";
    out.write(reinterpret_cast<const char*>(img.data().data()),
              static_cast<std::streamsize>(img.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_raw: write failed for " + path.string());
}

inline ImageGrid load_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_raw: cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    const auto h = nlohmann::json::parse(line);
    if (h.value("dtype", "") != "float64-le") throw std::runtime_error("load_raw: bad dtype");
    GridShape shape{h.at("height").get<int>(), h.at("width").get<int>(),
                    h.at("channels").get<int>()};
    std::vector<double> data(shape.size());
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != data.size() * sizeof(double))
        throw std::runtime_error("load_raw: truncated data in " + path.string());
    return ImageGrid(shape, std::move(data));
}

// Measurement file: one-line JSON header (shape, operator id, noise level,
// seed) followed by the raw little-endian values.
inline void save_measurement(const std::filesystem::path& path, const Measurement& m) {
    nlohmann::json h;
    h["shape"] = m.shape;
    h["operator_id"] = m.operator_id;
    h["noise_sigma"] = m.noise_sigma;
    h["seed"] = m.seed;
    h["count"] = m.values.size();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_measurement: cannot open " + path.string());
    out << h.dump() << "\n";
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_measurement: write failed for " + path.string());
}

inline Measurement load_measurement(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_measurement: cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    const auto h = nlohmann::json::parse(line);
    Measurement m;
    m.shape = h.at("shape").get<std::vector<int>>();
    m.operator_id = h.at("operator_id").get<std::string>();
    m.noise_sigma = h.at("noise_sigma").get<double>();
    m.seed = h.at("seed").get<std::uint64_t>();
    m.values.resize(h.at("count").get<std::size_t>());
    in.read(reinterpret_cast<char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != m.values.size() * sizeof(double))
        throw std::runtime_error("load_measurement: truncated data in " + path.string());
    return m;
}

// Loads every .pgm/.ppm in `dir` (lexicographic filename order) as one prior
// dataset. All images must share one shape.
inline PriorDataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("load_dataset: not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("load_dataset: no images in " + dir.string());
    std::vector<ImageGrid> items;
    for (const auto& f : files) {
        ImageGrid img = load_image(f);
        if (!items.empty() && !(img.shape() == items.front().shape()))
            throw std::runtime_error("load_dataset: mixed image sizes (" + f.string() + ")");
        items.push_back(std::move(img));
    }
    return PriorDataset(std::move(items));
}

}  // namespace dmo
