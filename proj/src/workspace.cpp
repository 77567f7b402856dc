#include "evopoison/workspace.hpp"

#include <fstream>
#include <sstream>

#include "evopoison/errors.hpp"

namespace evopoison::cli {

namespace fs = std::filesystem;

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
    if (root_.empty()) throw InvalidConfigError("workspace path is empty");
}

void Workspace::ensure_layout() const {
    for (const char* sub : {"graphs", "store", "reports", "transcripts"})
        fs::create_directories(root_ / sub);
}

void Workspace::atomic_write(const fs::path& path, const std::string& bytes) {
    fs::create_directories(path.parent_path());
    fs::path temp = path;
    temp += ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + temp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write to " + temp.string());
    }
    fs::rename(temp, path);
}

std::string Workspace::read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void Workspace::write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& records) {
    std::string bytes;
    for (const auto& record : records) bytes += record.dump() + "\n";
    atomic_write(path, bytes);
}

void Workspace::append_jsonl(const fs::path& path, const nlohmann::json& record) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error("cannot append to: " + path.string());
    out << record.dump() << "\n";
}

std::vector<nlohmann::json> Workspace::read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read: " + path.string());
    std::vector<nlohmann::json> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded())
            throw Error("bad JSONL at " + path.string() + ":" + std::to_string(line_number));
        records.push_back(std::move(doc));
    }
    return records;
}

} // namespace evopoison::cli
