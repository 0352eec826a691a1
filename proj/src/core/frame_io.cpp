#include "forge/error.hpp"
#include "forge/frames.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace forge::frame_io {

namespace fs = std::filesystem;

namespace {

// Reads the next whitespace-delimited PNM header token, skipping comments.
std::string next_token(std::istream& in) {
    std::string token;
    char c = 0;
    while (in.get(c)) {
        if (c == '#') {
            std::string ignored;
            std::getline(in, ignored);
            if (!token.empty()) break;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(c);
    }
    return token;
}

int parse_int(const std::string& token, const fs::path& path) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw IoError("malformed PNM header in " + path.string());
    }
}

bool is_pnm(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

}  // namespace

Frame read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto magic = next_token(in);
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw IoError(path.string() + " is not a binary PGM/PPM file");
    const int width = parse_int(next_token(in), path);
    const int height = parse_int(next_token(in), path);
    const int maxval = parse_int(next_token(in), path);
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
        throw IoError("invalid PNM dimensions in " + path.string());

    const std::size_t n = static_cast<std::size_t>(width) * height;
    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * channels * bytes_per_sample);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw IoError("truncated pixel data in " + path.string());

    std::vector<double> pixels(n * channels);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < channels; ++c) {
            const std::size_t s = (i * channels + c) * bytes_per_sample;
            const unsigned v = bytes_per_sample == 2 ? (unsigned{raw[s]} << 8) | raw[s + 1] : raw[s];
            pixels[c * n + i] = static_cast<double>(v) / maxval;
        }
    }
    return Frame(width, height, channels, std::move(pixels));
}

void write_pnm(const fs::path& path, const Frame& frame, const std::string& comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << (frame.channels() == 1 ? "P5\n" : "P6\n");
    if (!comment.empty()) out << "# " << comment << "\n";
    out << frame.width() << " " << frame.height() << "\n255\n";
    const std::size_t n = static_cast<std::size_t>(frame.width()) * frame.height();
    const auto px = frame.pixels();
    std::vector<unsigned char> raw(n * frame.channels());
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < frame.channels(); ++c)
            raw[i * frame.channels() + c] =
                static_cast<unsigned char>(std::lround(std::clamp(px[c * n + i], 0.0, 1.0) * 255.0));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

FrameSequence read_packed(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    detail::expect_magic(in, "FRMS", path.string());
    const auto width = detail::read_u32(in, path.string());
    const auto height = detail::read_u32(in, path.string());
    const auto count = detail::read_u32(in, path.string());
    if (width == 0 || height == 0) throw IoError("zero frame dimension in " + path.string());
    FrameSequence frames;
    frames.reserve(count);
    for (std::uint32_t f = 0; f < count; ++f) {
        std::vector<double> pixels(static_cast<std::size_t>(width) * height);
        for (auto& p : pixels) p = detail::read_f32(in, path.string());
        frames.emplace_back(static_cast<int>(width), static_cast<int>(height), 1, std::move(pixels), f);
    }
    return frames;
}

void write_packed(const fs::path& path, std::span<const Frame> frames) {
    if (frames.empty()) throw InvalidInput("cannot pack an empty sequence");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("FRMS", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(frames.front().width()));
    detail::write_u32(out, static_cast<std::uint32_t>(frames.front().height()));
    detail::write_u32(out, static_cast<std::uint32_t>(frames.size()));
    for (const auto& f : frames) {
        if (f.width() != frames.front().width() || f.height() != frames.front().height())
            throw InvalidInput("packed frames must share dimensions");
        for (double v : f.luma()) detail::write_f32(out, static_cast<float>(v));
    }
}

FrameSequence load_sequence(const fs::path& path) {
    if (fs::is_regular_file(path)) {
        if (is_pnm(path)) return {read_pnm(path)};
        return read_packed(path);
    }
    if (!fs::is_directory(path)) throw IoError("no such frame directory or file: " + path.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
        if (entry.is_regular_file() && is_pnm(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no PGM/PPM frames in " + path.string());
    FrameSequence frames;
    frames.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        frames.push_back(read_pnm(files[i]));
        frames.back().set_index(i);
    }
    return frames;
}

void save_sequence(const fs::path& dir, std::span<const Frame> frames, const std::string& comment) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.%s", i, frames[i].channels() == 1 ? "pgm" : "ppm");
        write_pnm(dir / name, frames[i], comment);
    }
}

}  // namespace forge::frame_io
