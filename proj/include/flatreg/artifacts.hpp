#ifndef FLATREG_ARTIFACTS_HPP
#define FLATREG_ARTIFACTS_HPP

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace flatreg {

// 17 significant digits: round-trip exact for 64-bit floats.
std::string fmt17(double x);

// Comma-separated, header row, UNIX newlines, UTF-8.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(std::vector<std::string> cells);
    void write(const std::string& path) const;
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

void write_json(const std::string& path, const nlohmann::json& j);

void ensure_directory(const std::string& path);

// FNV-1a 64-bit content hash, hex encoded. Manifests carry the hash of the
// canonical config JSON so a run can be matched to its exact configuration.
std::string content_hash(const std::string& text);

}  // namespace flatreg

#endif
