#pragma once

#include <string>
#include <vector>

#include "misf/errors.hpp"
#include "misf/mask.hpp"

namespace misf {

// Line-oriented dataset description: `key = value` settings followed by one
// relative image path per line under [train] / [test] headings.
struct DatasetManifest {
    std::string root;  // directory the relative paths resolve against
    std::vector<std::string> train;
    std::vector<std::string> test;
    int resolution = 64;
    Bucket bucket = Bucket::B20_40;
    uint64_t seed = 0;

    std::string resolve(const std::string& rel) const { return root + "/" + rel; }
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& m);

}  // namespace misf
