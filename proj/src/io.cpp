#include "nsculpt/io.hpp"

#include "nsculpt/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>

namespace nsculpt {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ExportError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ExportError("failed writing " + path.string());
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

json parse_json_file(const std::filesystem::path& path) {
    const auto text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void RunManifest::emit(const std::filesystem::path& out_dir, const std::string& name, std::string_view content) {
    write_file(out_dir / name, content);
    artifacts.push_back({name, sha256_hex(content)});
}

json RunManifest::to_json() const {
    json arts = json::array();
    for (const auto& a : artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
    return json{{"command", command}, {"config", config}, {"seed", seed}, {"artifacts", arts}};
}

RunManifest RunManifest::from_json(const json& j) {
    try {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& a : j.at("artifacts")) {
            m.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
}

bool RunManifest::verify(const std::filesystem::path& out_dir) const {
    for (const auto& a : artifacts) {
        std::error_code ec;
        if (!std::filesystem::exists(out_dir / a.path, ec)) return false;
        if (sha256_hex(read_file(out_dir / a.path)) != a.sha256) return false;
    }
    return true;
}

namespace {

constexpr std::array<const char*, 12> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                               "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78"};

const char* colour(std::size_t id) { return kPalette[id % kPalette.size()]; }

std::string unit_name(std::size_t layer, std::size_t unit) {
    return "u" + std::to_string(layer) + "_" + std::to_string(unit);
}

std::string unit_label(std::size_t layer, std::size_t unit, std::size_t depth) {
    if (layer == 0) return "x" + std::to_string(unit + 1);
    if (layer == depth) return "y" + std::to_string(unit + 1);
    return "h" + std::to_string(layer) + "." + std::to_string(unit);
}

}  // namespace

std::string export_dot(const ModuleHierarchy& h, const MaskedMlp& mlp) {
    const std::size_t L = mlp.depth();
    std::ostringstream os;
    os << "digraph network {\n  rankdir=LR;\n  node [shape=circle, style=filled, fontsize=10];\n";
    std::size_t covered = 0, alive = 0;
    for (std::size_t l = 0; l <= L; ++l) alive += mlp.alive_units(l).size();
    for (const auto& m : h.modules) {
        os << "  subgraph cluster_m" << m.id << " {\n    label=\"module " << m.id << "\";\n    color=\""
           << colour(m.id) << "\";\n";
        for (const auto& u : m.units) {
            if (u.layer > L || !mlp.alive(u.layer, u.unit)) throw ExportError("hierarchy names a unit that is not alive");
            os << "    " << unit_name(u.layer, u.unit) << " [label=\"" << unit_label(u.layer, u.unit, L)
               << "\", fillcolor=\"" << colour(m.id) << "\"];\n";
            ++covered;
        }
        os << "  }\n";
    }
    if (covered != alive) throw ExportError("hierarchy does not cover every alive unit");
    // Same-rank hints keep each layer in one column.
    for (std::size_t l = 0; l <= L; ++l) {
        const auto units = mlp.alive_units(l);
        if (units.empty()) continue;
        os << "  { rank=same;";
        for (auto u : units) os << ' ' << unit_name(l, u) << ';';
        os << " }\n";
    }
    for (std::size_t l = 0; l < L; ++l) {
        const auto& W = mlp.layers[l];
        for (auto v : mlp.alive_units(l + 1)) {
            for (auto u : mlp.alive_units(l)) {
                if (W.live(v, u)) os << "  " << unit_name(l, u) << " -> " << unit_name(l + 1, v) << ";\n";
            }
        }
    }
    os << "}\n";
    return os.str();
}

std::string export_dot(const ModuleHierarchy& h) {
    std::ostringstream os;
    os << "digraph modules {\n  rankdir=LR;\n  node [shape=box, style=filled];\n";
    for (const auto& m : h.modules) {
        os << "  m" << m.id << " [label=\"module " << m.id << "\\nunits " << m.units.size();
        if (!m.inputs.empty()) {
            os << "\\nin:";
            for (auto i : m.inputs) os << " x" << i + 1;
        }
        if (!m.outputs.empty()) {
            os << "\\nout:";
            for (auto o : m.outputs) os << " y" << o + 1;
        }
        os << "\", fillcolor=\"" << colour(m.id) << "\"];\n";
    }
    for (const auto& [a, b] : h.uses) os << "  m" << a << " -> m" << b << ";\n";
    os << "}\n";
    return os.str();
}

std::string export_dot(const FunctionGraph& g) {
    std::ostringstream os;
    os << "digraph function {\n  rankdir=LR;\n";
    std::size_t in_k = 0, out_k = 0;
    for (const auto& n : g.nodes()) {
        os << "  n" << n.id << " [";
        switch (n.kind) {
            case NodeKind::Input: os << "shape=circle, label=\"x" << ++in_k << "\""; break;
            case NodeKind::Output:
                os << "shape=doublecircle, label=\"y" << ++out_k << ":"
                   << (n.gate == GateKind::And ? "AND" : n.gate == GateKind::Or ? "OR" : "ID") << "\"";
                break;
            case NodeKind::Gate:
                os << "shape=box, label=\"" << (n.gate == GateKind::And ? "AND" : n.gate == GateKind::Or ? "OR" : "ID")
                   << "\"";
                break;
        }
        os << "];\n";
    }
    for (const auto& e : g.edges()) {
        os << "  n" << e.src << " -> n" << e.dst;
        if (e.negate) os << " [style=dashed, arrowhead=odot]";
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace nsculpt
