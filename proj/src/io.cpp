#include "wrank/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unistd.h>

#include "wrank/errors.hpp"

namespace wr {

namespace fs = std::filesystem;

std::string format_number(double x) {
    if (x == 0.0) return "0";  // also folds -0
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string format_number(std::int64_t x) { return std::to_string(x); }

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_atomic(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    fs::path tmp = p;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw InputError("short write to " + tmp.string());
        }
    }
    fs::rename(tmp, p);
}

std::string git_blob_sha1(std::string_view content) {
    std::string head = "blob " + std::to_string(content.size());
    head.push_back('\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, head.data(), head.size());
    EVP_DigestUpdate(ctx, content.data(), content.size());
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return static_cast<int>(c);
    return -1;
}

CsvTable parse_csv(std::string_view text) {
    CsvTable t;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    std::size_t line = 1;
    auto end_row = [&] {
        row.push_back(std::move(cell));
        cell.clear();
        if (t.header.empty()) t.header = std::move(row);
        else t.rows.push_back(std::move(row));
        row.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line;
                cell.push_back(ch);
            }
            continue;
        }
        if (ch == '"') {
            quoted = true;
            any = true;
        } else if (ch == ',') {
            row.push_back(std::move(cell));
            cell.clear();
            any = true;
        } else if (ch == '\n') {
            ++line;
            end_row();
        } else if (ch != '\r') {
            cell.push_back(ch);
            any = true;
        }
    }
    if (quoted) throw SchemaError("csv: unterminated quote near line " + std::to_string(line));
    if (any || !cell.empty()) end_row();
    return t;
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) : cols_(header.size()) {
    for (const auto& h : header) field(h);
    end_row();
}

CsvWriter& CsvWriter::field(std::string_view s) {
    if (in_row_++) out_.push_back(',');
    bool quote = s.find_first_of(",\"\n") != std::string_view::npos;
    if (!quote) {
        out_.append(s);
        return *this;
    }
    out_.push_back('"');
    for (char c : s) {
        if (c == '"') out_.push_back('"');
        out_.push_back(c);
    }
    out_.push_back('"');
    return *this;
}

void CsvWriter::end_row() {
    if (in_row_ != cols_) throw InputError("csv writer: row has the wrong number of fields");
    out_.push_back('\n');
    in_row_ = 0;
}

Manifest Manifest::load(const fs::path& dir) {
    Manifest m;
    fs::path p = dir / "manifest.json";
    if (!fs::exists(p)) return m;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(p));
        m.config_sha1 = j.at("config_sha1").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& [name, rec] : j.at("artifacts").items())
            m.artifacts[name] = {rec.at("sha1").get<std::string>(), rec.at("bytes").get<std::uint64_t>(),
                                 rec.at("stage").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("manifest " + p.string() + " is malformed: " + e.what());
    }
    return m;
}

void Manifest::save(const fs::path& dir) const {
    nlohmann::ordered_json j;
    j["config_sha1"] = config_sha1;
    j["seed"] = seed;
    nlohmann::ordered_json arts = nlohmann::ordered_json::object();
    for (const auto& [name, rec] : artifacts)
        arts[name] = {{"sha1", rec.sha1}, {"bytes", rec.bytes}, {"stage", rec.stage}};
    j["artifacts"] = arts;
    write_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

void Manifest::write(const fs::path& dir, const std::string& name, std::string_view content,
                     const std::string& stage) {
    write_atomic(dir / name, content);
    artifacts[name] = {git_blob_sha1(content), content.size(), stage};
}

std::string Manifest::require(const fs::path& dir, const std::string& name) const {
    auto it = artifacts.find(name);
    fs::path p = dir / name;
    if (it == artifacts.end() || !fs::exists(p))
        throw InputError("missing artifact '" + name + "' in " + dir.string() + "; run the stage that produces it first");
    std::string text = read_text(p);
    if (git_blob_sha1(text) != it->second.sha1)
        throw InputError("artifact '" + name + "' does not match its manifest hash; rerun stage '" + it->second.stage + "'");
    return text;
}

}  // namespace wr
