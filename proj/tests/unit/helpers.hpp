#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "gridlex/core.hpp"

namespace testing {

namespace fs = std::filesystem;

inline const fs::path kDataDir = GRIDLEX_DATA_DIR;

/// Fresh scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("gridlex-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(path_ / name, std::ios::binary) << text;
        return path_ / name;
    }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

inline std::vector<std::string> labels(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::to_string(i));
    return out;
}

/// Dense row x col grid named "row" / "col".
inline gridlex::GridTable grid2(const std::vector<std::vector<double>>& v) {
    std::map<gridlex::CellIndex, double> cells;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v[i].size(); ++j) cells[{i, j}] = v[i][j];
    return {{{"row", labels(v.size())}, {"col", labels(v[0].size())}}, std::move(cells), "val_loss.ar"};
}

inline const char* kScales =
    "{\"name\": \"150M\", \"d_model\": 512, \"n_nonemb\": 22800000}\n"
    "{\"name\": \"380M\", \"d_model\": 1024, \"n_nonemb\": 121700000}\n";

}  // namespace testing
