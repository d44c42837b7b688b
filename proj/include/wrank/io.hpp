#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace wr {

// Shortest decimal text that parses back to the same double.
std::string format_number(double x);
std::string format_number(std::int64_t x);

std::string read_text(const std::filesystem::path& p);

// Writes to a sibling temporary file and renames it over the target.
void write_atomic(const std::filesystem::path& p, std::string_view content);

// Hash git uses for a blob with this content.
std::string git_blob_sha1(std::string_view content);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

// Comma-separated with an optional header line; fields may be double-quoted.
CsvTable parse_csv(std::string_view text);

class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header);
    CsvWriter& field(std::string_view s);
    CsvWriter& field(double x) { return field(format_number(x)); }
    CsvWriter& field(std::int64_t x) { return field(format_number(x)); }
    CsvWriter& field(int x) { return field(static_cast<std::int64_t>(x)); }
    void end_row();
    const std::string& str() const { return out_; }

private:
    std::string out_;
    std::size_t cols_ = 0, in_row_ = 0;
};

struct ArtifactRecord {
    std::string sha1;
    std::uint64_t bytes = 0;
    std::string stage;
};

// manifest.json in the output directory: artifact name -> hash, plus the hash
// of the resolved config that produced them.
class Manifest {
public:
    static Manifest load(const std::filesystem::path& dir);  // empty when absent
    void save(const std::filesystem::path& dir) const;

    // Writes the artifact atomically and records its hash.
    void write(const std::filesystem::path& dir, const std::string& name, std::string_view content,
               const std::string& stage);
    // Throws InputError naming the artifact if it is missing or its content
    // no longer matches the recorded hash.
    std::string require(const std::filesystem::path& dir, const std::string& name) const;

    std::string config_sha1;
    std::uint64_t seed = 0;
    std::map<std::string, ArtifactRecord> artifacts;
};

}  // namespace wr
