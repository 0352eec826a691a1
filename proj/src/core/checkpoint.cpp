// Checkpoint layout (little-endian):
//   "FGCK" | u32 version | u32 record count
//   per record: u32 name length | name bytes | u32 ndim | u32 dims[ndim] | f32 data (row-major)

#include "forge/diffusion.hpp"
#include "forge/error.hpp"

#include "binary_io.hpp"

#include <fstream>

namespace forge {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write("FGCK", 4);
    detail::write_u32(out, kCheckpointVersion);
    detail::write_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& [name, value] : model.parameters()) {
        detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(out, 2);
        detail::write_u32(out, static_cast<std::uint32_t>(value.rows()));
        detail::write_u32(out, static_cast<std::uint32_t>(value.cols()));
        for (Eigen::Index r = 0; r < value.rows(); ++r)
            for (Eigen::Index c = 0; c < value.cols(); ++c) detail::write_f32(out, static_cast<float>(value(r, c)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

DenoiserModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::string what = "checkpoint " + path.string();
    detail::expect_magic(in, "FGCK", what);
    const auto version = detail::read_u32(in, what);
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto count = detail::read_u32(in, what);
    std::map<std::string, ad::Matrix> params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = detail::read_u32(in, what);
        if (len > 4096) throw IoError("implausible parameter name length in " + what);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw IoError("truncated " + what);
        const auto ndim = detail::read_u32(in, what);
        if (ndim < 1 || ndim > 2) throw IoError("parameter " + name + " must be 1-D or 2-D");
        const auto rows = ndim == 2 ? detail::read_u32(in, what) : 1u;
        const auto cols = detail::read_u32(in, what);
        ad::Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = detail::read_f32(in, what);
        if (!params.emplace(name, std::move(m)).second) throw IoError("duplicate parameter " + name + " in " + what);
    }
    return DenoiserModel::from_parameters(std::move(params));
}

}  // namespace forge
