#include "satcalc/checkpoint.hpp"

#include "satcalc/error.hpp"
#include "satcalc/tensor_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace satcalc {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const ModelParams& m)
{
    fs::create_directories(dir / "params");
    write_text_atomic(dir / "config.txt", m.config.to_text());
    std::ostringstream index;
    for (const auto& g : param_groups(m.trainable)) {
        const std::string rel = "params/" + g.name + ".satc";
        const Matrix& v = *g.value;
        // Row-major float32 payload.
        std::vector<float> flat(static_cast<std::size_t>(v.size()));
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c)
                flat[static_cast<std::size_t>(r * v.cols() + c)] = static_cast<float>(v(r, c));
        const std::uint32_t dims[2] = {static_cast<std::uint32_t>(v.rows()), static_cast<std::uint32_t>(v.cols())};
        write_tensor(dir / rel, dims, flat);
        index << g.name << '\t' << rel << '\n';
    }
    write_text_atomic(dir / "params.tsv", index.str());
}

ModelParams load_checkpoint(const fs::path& dir)
{
    std::ifstream cf(dir / "config.txt");
    if (!cf)
        throw IoError("checkpoint has no config.txt: " + dir.string());
    std::stringstream cs;
    cs << cf.rdbuf();
    const ModelConfig cfg = ModelConfig::from_text(cs.str());

    std::ifstream pf(dir / "params.tsv");
    if (!pf)
        throw IoError("checkpoint has no params.tsv: " + dir.string());
    std::map<std::string, std::string> files;
    std::string line;
    while (std::getline(pf, line)) {
        if (line.empty())
            continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError("malformed params.tsv line: " + line);
        files[line.substr(0, tab)] = line.substr(tab + 1);
    }

    ModelParams m = ModelParams::init(cfg, 0);
    for (auto& g : param_groups(m.trainable)) {
        const auto it = files.find(g.name);
        if (it == files.end())
            throw FormatError("checkpoint is missing parameter group " + g.name);
        const Tensor t = read_tensor(dir / it->second);
        Matrix& v = *g.value;
        if (t.dims.size() != 2 || t.dims[0] != v.rows() || t.dims[1] != v.cols())
            throw FormatError("parameter group " + g.name + " has the wrong shape");
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c)
                v(r, c) = t.values[static_cast<std::size_t>(r * v.cols() + c)];
    }
    return m;
}

} // namespace satcalc
