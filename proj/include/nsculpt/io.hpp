#pragma once

// File output with content digests, run manifests, and Graphviz export.

#include "nsculpt/boolean_graph.hpp"
#include "nsculpt/mlp.hpp"
#include "nsculpt/module_detection.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace nsculpt {

std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);  // throws FormatError
void write_file(const std::filesystem::path& path, std::string_view content);  // throws ExportError

// Canonical JSON text: sorted keys (nlohmann objects are ordered maps),
// two-space indent, trailing newline.
std::string json_text(const nlohmann::json& j);
nlohmann::json parse_json_file(const std::filesystem::path& path);

struct Artifact {
    std::string path;  // relative to the output directory
    std::string sha256;

    bool operator==(const Artifact&) const = default;
};

struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<Artifact> artifacts;

    // Writes `content` under `out_dir` and records its digest.
    void emit(const std::filesystem::path& out_dir, const std::string& name, std::string_view content);
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    // Recomputes every digest from disk.
    bool verify(const std::filesystem::path& out_dir) const;
};

inline constexpr const char* kManifestName = "manifest.json";

// Unit-level drawing of a network: one cluster per module, alive units
// only, unmasked edges only, left-to-right layers. Throws ExportError when
// the hierarchy does not cover every alive unit.
std::string export_dot(const ModuleHierarchy& hierarchy, const MaskedMlp& mlp);
// Module-level drawing: one node per module, uses-edges between them.
std::string export_dot(const ModuleHierarchy& hierarchy);
// Function graph drawing.
std::string export_dot(const FunctionGraph& graph);

}  // namespace nsculpt
