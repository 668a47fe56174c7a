#include "casseg/pgm.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "casseg/errors.hpp"

namespace casseg {

namespace {

struct RawGraymap {
    std::size_t width = 0;
    std::size_t height = 0;
    int maxval = 0;
    std::vector<int> gray;
};

class HeaderReader {
public:
    HeaderReader(const std::vector<unsigned char>& bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

    std::size_t pos() const { return pos_; }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) throw ParseError(std::string("truncated header, expected ") + what, pos_);
        if (!std::isdigit(bytes_[pos_])) throw ParseError(std::string("expected ") + what, pos_);
        std::size_t value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (value > (std::size_t{1} << 31)) throw ParseError(std::string(what) + " too large", pos_);
            ++pos_;
        }
        return value;
    }

    void single_whitespace() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw ParseError("expected whitespace before raster", pos_);
        ++pos_;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const unsigned char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    const std::vector<unsigned char>& bytes_;
    std::size_t pos_;
};

RawGraymap parse(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("bad magic, expected P5", 0);
    HeaderReader header(bytes, 2);
    RawGraymap g;
    g.width = header.number("width");
    g.height = header.number("height");
    const std::size_t maxval = header.number("maxval");
    if (g.width == 0 || g.height == 0) throw ParseError("zero image extent", header.pos());
    if (maxval == 0 || maxval > 65535) throw ParseError("maxval outside 1..65535", header.pos());
    g.maxval = static_cast<int>(maxval);
    header.single_whitespace();

    const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
    const std::size_t count = g.width * g.height;
    const std::size_t start = header.pos();
    if (bytes.size() - start < count * sample_bytes) {
        throw ParseError("truncated raster: need " + std::to_string(count * sample_bytes) + " bytes, have " +
                             std::to_string(bytes.size() - start),
                         bytes.size());
    }
    g.gray.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = start + i * sample_bytes;
        const int v = sample_bytes == 1 ? bytes[at] : (bytes[at] << 8) | bytes[at + 1];
        if (v > g.maxval) throw ParseError("sample exceeds maxval", at);
        g.gray[i] = v;
    }
    return g;
}

RawGraymap read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
}

void write_raw(const std::filesystem::path& path, std::size_t height, std::size_t width, int maxval,
               const std::vector<int>& gray) {
    if (height == 0 || width == 0) throw ShapeError("pgm_write: zero image extent");
    if (maxval < 1 || maxval > 65535) throw ParameterError("pgm_write: maxval outside 1..65535");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << width << " " << height << "\n" << maxval << "\n";
    for (int v : gray) {
        if (maxval < 256) {
            out.put(static_cast<char>(v));
        } else {
            out.put(static_cast<char>(v >> 8));
            out.put(static_cast<char>(v & 0xff));
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<int> quantize(std::span<const double> values, int maxval) {
    std::vector<int> gray(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (!(v >= 0.0 && v <= 1.0)) throw NumericError("pgm_write: value outside [0, 1]");
        gray[i] = static_cast<int>(std::lround(v * maxval));
    }
    return gray;
}

} // namespace

Tensor pgm_read(const std::filesystem::path& path) {
    const RawGraymap g = read_raw(path);
    std::vector<double> v(g.gray.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(g.gray[i]) / g.maxval;
    return Tensor({g.height, g.width}, std::move(v));
}

void pgm_write(const std::filesystem::path& path, const Tensor& image, int maxval) {
    std::size_t h = 0, w = 0;
    if (image.rank() == 2) {
        h = image.shape()[0];
        w = image.shape()[1];
    } else if (image.rank() == 3 && image.shape()[2] == 1) {
        h = image.shape()[0];
        w = image.shape()[1];
    } else {
        throw ShapeError("pgm_write: expected [H, W] or [H, W, 1] tensor");
    }
    write_raw(path, h, w, maxval, quantize(image.data(), maxval));
}

void pgm_write(const std::filesystem::path& path, const SaliencyMap& map, int maxval) {
    write_raw(path, map.height, map.width, maxval, quantize(map.values, maxval));
}

RegionPartition pgm_read_labels(const std::filesystem::path& path) {
    RawGraymap g = read_raw(path);
    return RegionPartition(g.height, g.width, std::move(g.gray));
}

void pgm_write_labels(const std::filesystem::path& path, const RegionPartition& partition) {
    const int maxval = std::max(1, static_cast<int>(partition.region_count()) - 1);
    write_raw(path, partition.height(), partition.width(), maxval < 256 ? 255 : 65535, partition.labels());
}

void pgm_write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<int> gray(mask.values.begin(), mask.values.end());
    write_raw(path, mask.height, mask.width, 255, gray);
}

} // namespace casseg
