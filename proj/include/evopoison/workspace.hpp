#pragma once
// Workspace directory layout and persistence discipline: every file write is
// atomic (write temp, then rename); JSONL stores are rewritten whole by the
// command that owns them and appended to otherwise.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace evopoison::cli {

class Workspace {
public:
    explicit Workspace(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    void ensure_layout() const;

    std::filesystem::path clean_graph_path() const { return root_ / "graphs" / "clean.json"; }
    std::filesystem::path poisoned_graph_path() const {
        return root_ / "graphs" / "poisoned.json";
    }
    std::filesystem::path attack_store_path() const { return root_ / "store" / "attacks.jsonl"; }
    std::filesystem::path multi_store_path() const { return root_ / "store" / "multi.jsonl"; }
    std::filesystem::path manifest_path() const {
        return root_ / "store" / "poison_manifest.json";
    }
    std::filesystem::path report_path() const { return root_ / "reports" / "report.json"; }
    std::filesystem::path report_csv_path() const { return root_ / "reports" / "report.csv"; }
    std::filesystem::path cppl_report_path() const { return root_ / "reports" / "cppl.json"; }
    std::filesystem::path query_transcript_path() const {
        return root_ / "transcripts" / "queries.jsonl";
    }
    std::filesystem::path llm_transcript_path() const {
        return root_ / "transcripts" / "llm.jsonl";
    }

    static void atomic_write(const std::filesystem::path& path, const std::string& bytes);
    static std::string read_file(const std::filesystem::path& path);

    static void write_jsonl(const std::filesystem::path& path,
                            const std::vector<nlohmann::json>& records);
    static void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record);
    static std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

private:
    std::filesystem::path root_;
};

} // namespace evopoison::cli
