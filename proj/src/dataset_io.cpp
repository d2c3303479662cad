#include "mspt/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace mspt {

namespace fs = std::filesystem;

namespace {

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

template <typename T>
void byteswap_inplace(std::vector<T>& v) {
    for (auto& x : v) {
        auto* p = reinterpret_cast<unsigned char*>(&x);
        std::reverse(p, p + sizeof(T));
    }
}

template <typename T>
void write_raw(const fs::path& path, const std::vector<T>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(T)));
    } else {
        std::vector<T> tmp = values;
        byteswap_inplace(tmp);
        out.write(reinterpret_cast<const char*>(tmp.data()),
                  static_cast<std::streamsize>(tmp.size() * sizeof(T)));
    }
    if (!out) throw DataError("short write to '" + path.string() + "'");
}

template <typename T>
std::vector<T> read_raw(const fs::path& path, std::size_t expect_count, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(what + ": cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expect_count * sizeof(T))
        throw DataError(what + ": '" + path.string() + "' holds " +
                        std::to_string(bytes / sizeof(T)) + " values, expected " +
                        std::to_string(expect_count));
    in.seekg(0);
    std::vector<T> v(expect_count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw DataError(what + ": short read from '" + path.string() + "'");
    if constexpr (std::endian::native != std::endian::little) byteswap_inplace(v);
    return v;
}

std::string scale_file_name(const std::string& bag_id, const std::string& scale) {
    return bag_id + "_" + scale + ".f32";
}

} // namespace

void write_f32(const fs::path& path, const std::vector<double>& values) {
    std::vector<float> f(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) f[i] = static_cast<float>(values[i]);
    write_raw(path, f);
}

std::vector<double> read_f32(const fs::path& path, std::size_t expect_count, const std::string& what) {
    const auto f = read_raw<float>(path, expect_count, what);
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) v[i] = static_cast<double>(f[i]);
    return v;
}

void write_f64(const fs::path& path, const std::vector<double>& values) { write_raw(path, values); }

std::vector<double> read_f64(const fs::path& path, std::size_t expect_count, const std::string& what) {
    return read_raw<double>(path, expect_count, what);
}

void write_u32(const fs::path& path, const std::vector<std::uint32_t>& values) { write_raw(path, values); }

std::vector<std::uint32_t> read_u32(const fs::path& path, std::size_t expect_count,
                                    const std::string& what) {
    return read_raw<std::uint32_t>(path, expect_count, what);
}

nlohmann::json read_json_file(const fs::path& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw DataError(what + ": cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(what + ": malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw DataError("short write to '" + path.string() + "'");
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir);

    nlohmann::json bags = nlohmann::json::array();
    for (const auto& bag : ds.bags) {
        nlohmann::json scales;
        for (const auto& [sname, mat] : bag.scales) {
            const std::string fname = scale_file_name(bag.id, sname);
            write_f32(dir / fname, mat.values());
            scales[sname] = {{"file", fname}, {"rows", mat.rows()}, {"cols", mat.cols()}};
        }
        bags.push_back({{"id", bag.id}, {"label", bag.label}, {"scales", scales}});
    }

    const nlohmann::json manifest = {
        {"format_version", kDatasetFormatVersion},
        {"d", ds.d},
        {"class_names", ds.class_names},
        {"scale_names", ds.scale_names},
        {"provenance", ds.provenance},
        {"bags", bags},
    };
    write_json_file(dir / "manifest.json", manifest);
}

Dataset load_dataset(const fs::path& dir) {
    const nlohmann::json m = read_json_file(dir / "manifest.json", "dataset manifest");
    if (!m.contains("format_version") || !m.at("format_version").is_number_integer())
        throw DataError("dataset manifest: missing format_version");
    const int version = m.at("format_version").get<int>();
    if (version != kDatasetFormatVersion)
        throw DataError("dataset manifest: unknown format version " + std::to_string(version));

    Dataset ds;
    try {
        ds.d = m.at("d").get<std::size_t>();
        ds.class_names = m.at("class_names").get<std::vector<std::string>>();
        ds.scale_names = m.at("scale_names").get<std::vector<std::string>>();
        ds.provenance = m.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset manifest: ") + e.what());
    }

    if (!m.contains("bags") || !m.at("bags").is_array())
        throw DataError("dataset manifest: missing bags array");

    for (const auto& jb : m.at("bags")) {
        MultiScaleBag bag;
        try {
            bag.id = jb.at("id").get<std::string>();
            bag.label = jb.at("label").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("dataset manifest: bad bag entry: ") + e.what());
        }
        if (bag.label < 0 || static_cast<std::size_t>(bag.label) >= ds.class_names.size())
            throw DataError("bag " + bag.id + ": label " + std::to_string(bag.label) +
                            " out of range for " + std::to_string(ds.class_names.size()) + " classes");
        for (const auto& sname : ds.scale_names) {
            if (!jb.at("scales").contains(sname))
                throw DataError("bag " + bag.id + ": missing scale " + sname);
            const auto& js = jb.at("scales").at(sname);
            const auto rows = js.at("rows").get<std::size_t>();
            const auto cols = js.at("cols").get<std::size_t>();
            if (cols != ds.d)
                throw DataError("bag " + bag.id + " scale " + sname + ": cols " +
                                std::to_string(cols) + " != dataset d " + std::to_string(ds.d));
            if (rows == 0)
                throw DataError("bag " + bag.id + " scale " + sname + ": empty matrix");
            const auto file = js.at("file").get<std::string>();
            auto values = read_f32(dir / file, rows * cols,
                                   "bag " + bag.id + " scale " + sname);
            bag.scales.emplace_back(sname, Tensor::from_values(rows, cols, std::move(values)));
        }
        ds.bags.push_back(std::move(bag));
    }
    return ds;
}

ValidationReport validate_manifest(const fs::path& dir) {
    ValidationReport report;
    const auto note = [&report](const std::string& msg) { report.findings.push_back(msg); };

    nlohmann::json m;
    try {
        m = read_json_file(dir / "manifest.json", "dataset manifest");
    } catch (const DataError& e) {
        note(e.what());
        return report;
    }

    if (!m.contains("format_version") || !m.at("format_version").is_number_integer() ||
        m.at("format_version").get<int>() != kDatasetFormatVersion) {
        note("manifest: missing or unknown format_version");
        return report;
    }

    std::size_t d = 0;
    std::size_t n_classes = 0;
    std::vector<std::string> scale_names;
    if (m.contains("d") && m.at("d").is_number_unsigned())
        d = m.at("d").get<std::size_t>();
    else
        note("manifest: missing feature dimension d");
    if (m.contains("class_names") && m.at("class_names").is_array())
        n_classes = m.at("class_names").size();
    else
        note("manifest: missing class_names");
    if (m.contains("scale_names") && m.at("scale_names").is_array())
        scale_names = m.at("scale_names").get<std::vector<std::string>>();
    else
        note("manifest: missing scale_names");

    if (!m.contains("bags") || !m.at("bags").is_array()) {
        note("manifest: missing bags array");
        return report;
    }

    std::vector<std::string> seen_ids;
    std::vector<std::string> off_dimension;
    for (const auto& jb : m.at("bags")) {
        if (!jb.contains("id") || !jb.at("id").is_string()) {
            note("bag entry without id");
            continue;
        }
        const auto id = jb.at("id").get<std::string>();
        if (std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end())
            note("duplicate bag id " + id);
        seen_ids.push_back(id);

        if (!jb.contains("label") || !jb.at("label").is_number_integer())
            note("bag " + id + ": missing label");
        else if (n_classes > 0) {
            const int label = jb.at("label").get<int>();
            if (label < 0 || static_cast<std::size_t>(label) >= n_classes)
                note("bag " + id + ": label " + std::to_string(label) + " out of range");
        }

        if (!jb.contains("scales") || !jb.at("scales").is_object()) {
            note("bag " + id + ": missing scales");
            continue;
        }
        for (const auto& sname : scale_names) {
            if (!jb.at("scales").contains(sname)) {
                note("bag " + id + ": missing scale " + sname);
                continue;
            }
            const auto& js = jb.at("scales").at(sname);
            if (!js.contains("file") || !js.contains("rows") || !js.contains("cols")) {
                note("bag " + id + " scale " + sname + ": incomplete entry");
                continue;
            }
            const auto rows = js.at("rows").get<std::size_t>();
            const auto cols = js.at("cols").get<std::size_t>();
            if (rows == 0) note("bag " + id + " scale " + sname + ": empty matrix");
            if (d > 0 && cols != d && std::find(off_dimension.begin(), off_dimension.end(), id) ==
                                          off_dimension.end())
                off_dimension.push_back(id);
            const fs::path f = dir / js.at("file").get<std::string>();
            std::error_code ec;
            const auto sz = fs::file_size(f, ec);
            if (ec) {
                note("bag " + id + " scale " + sname + ": missing file " + f.filename().string());
            } else if (sz != rows * cols * sizeof(float)) {
                note("bag " + id + " scale " + sname + ": file size " + std::to_string(sz) +
                     " bytes does not match declared " + shape_str(rows, cols));
            }
        }
    }
    if (!off_dimension.empty()) {
        std::string msg = "feature dimension differs from manifest d for bags:";
        for (const auto& id : off_dimension) msg += " " + id;
        note(msg);
    }
    return report;
}

} // namespace mspt
