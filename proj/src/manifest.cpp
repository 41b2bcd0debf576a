#include "misf/manifest.hpp"

#include <fstream>

namespace misf {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("manifest: cannot open " + path);

    DatasetManifest m;
    // root defaults to the manifest's own directory
    size_t slash = path.find_last_of('/');
    m.root = slash == std::string::npos ? "." : path.substr(0, slash);

    std::vector<std::string>* section = nullptr;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (s == "[train]") {
            section = &m.train;
            continue;
        }
        if (s == "[test]") {
            section = &m.test;
            continue;
        }
        if (s[0] == '[')
            throw ConfigError("manifest: unknown section " + s + " at line " +
                              std::to_string(lineno));
        size_t eq = s.find('=');
        if (eq != std::string::npos && section == nullptr) {
            std::string key = trim(s.substr(0, eq));
            std::string val = trim(s.substr(eq + 1));
            if (key == "root")
                m.root = val;
            else if (key == "resolution")
                m.resolution = std::stoi(val);
            else if (key == "bucket")
                m.bucket = parse_bucket(val);
            else if (key == "seed")
                m.seed = std::stoull(val);
            else
                throw ConfigError("manifest: unknown key '" + key + "' at line " +
                                  std::to_string(lineno));
            continue;
        }
        if (section == nullptr)
            throw ConfigError("manifest: path outside [train]/[test] at line " +
                              std::to_string(lineno));
        section->push_back(s);
    }
    check(m.resolution >= 32, "manifest: resolution must be at least 32");
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream f(path);
    if (!f) throw IoError("manifest: cannot open for writing " + path);
    f << "root = " << m.root << "\n";
    f << "resolution = " << m.resolution << "\n";
    f << "bucket = " << bucket_name(m.bucket) << "\n";
    f << "seed = " << m.seed << "\n";
    f << "[train]\n";
    for (const auto& p : m.train) f << p << "\n";
    f << "[test]\n";
    for (const auto& p : m.test) f << p << "\n";
    if (!f) throw IoError("manifest: write failed " + path);
}

}  // namespace misf
